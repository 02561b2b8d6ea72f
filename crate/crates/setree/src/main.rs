//! Thin command-line front end: each subcommand is a short delegation into
//! the library plus the file formats of [`setree::io`]. Artifact-producing
//! commands write fixed file names into the `--out` directory so runs chain
//! together (`fit` → `decode`/`cluster`/`viz`).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use setree::autodiff::Tensor;
use setree::decode::{clusters_natural, clusters_with_k, decode_tree, prune};
use setree::entropy::{greedy_coding_tree, tree_si};
use setree::graph::{load_graph, Graph};
use setree::io::{self, ConfigFile};
use setree::lorentz::LorentzSpace;
use setree::metrics::{acc, ari, metric_report, nmi};
use setree::train::{infer, train, TrainConfig, GAMMA_FLOOR};
use setree::{check, Error};

#[derive(Parser)]
#[command(
    name = "setree",
    version,
    about = "Graph clustering through structural entropy: discrete coding trees \
             and a trainable hyperbolic-embedding pipeline."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the embedding model on a graph; write tree.json, labels.txt,
    /// loss.csv and checkpoint.json into --out.
    Fit(FitArgs),
    /// Build the discrete greedy coding tree; write tree.json and labels.txt.
    CodingTree(CodingTreeArgs),
    /// Rebuild tree.json and labels.txt from checkpoint.json in --out.
    Decode(DecodeArgs),
    /// Print flat cluster labels from a stored tree, optionally forcing --k
    /// clusters by merging or splitting tree nodes.
    Cluster(ClusterArgs),
    /// Score predicted labels against ground truth; print metrics as JSON.
    Eval(EvalArgs),
    /// Run the library's full invariant suite; nonzero exit on any failure.
    Check,
    /// Project a stored tree onto the Poincaré disc; print JSON and write
    /// viz.json plus an SVG scatter into --out.
    Viz(VizArgs),
}

#[derive(Args, Default)]
struct FitArgs {
    /// Edge-list file: one "src dst [weight]" per line, 0-based ids.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Node attributes CSV (N rows); identity features when absent.
    #[arg(long)]
    attrs: Option<PathBuf>,
    /// Ground-truth labels; only used to print a score after training.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Tree height H (default 2).
    #[arg(long)]
    height: Option<usize>,
    /// Virtual-graph fusion weight in (0,1]; 0 selects the smallest
    /// positive value (plain objective).
    #[arg(long)]
    gamma: Option<f64>,
    /// Neighbors kept per node in the virtual graph.
    #[arg(long)]
    knn: Option<usize>,
    /// Similarity-kernel temperature.
    #[arg(long)]
    temp: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; keys mirror these flags, flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CodingTreeArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Tree height (≥ 2).
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    attrs: Option<PathBuf>,
    /// Directory holding checkpoint.json; receives tree.json and labels.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Directory holding tree.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Target cluster count; natural height-1 clusters when absent.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted labels file.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth labels file.
    #[arg(long)]
    truth: PathBuf,
    /// Graph file; adds the partition-conductance field when given.
    #[arg(long)]
    graph: Option<PathBuf>,
}

#[derive(Args)]
struct VizArgs {
    /// Directory holding tree.json; receives viz.json and viz.svg.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// A required setting that neither the flag nor the config file supplied is
/// a usage error (exit 2), not a runtime failure.
struct Usage(String);

fn need<T>(value: Option<T>, flag: &str) -> Result<T, Usage> {
    value.ok_or_else(|| Usage(format!("--{flag} is required (flag or config file)")))
}

fn file_config(path: &Option<PathBuf>) -> setree::Result<ConfigFile> {
    match path {
        Some(p) => io::read_config_file(p),
        None => Ok(ConfigFile::default()),
    }
}

fn path_of(flag: Option<PathBuf>, file: &Option<String>) -> Option<PathBuf> {
    flag.or_else(|| file.as_ref().map(PathBuf::from))
}

fn run_fit(args: FitArgs) -> Result<(), FailureKind> {
    let file = file_config(&args.config)?;
    let graph_path = need(path_of(args.graph, &file.graph), "graph")?;
    let out = need(path_of(args.out, &file.out), "out")?;
    let attrs = path_of(args.attrs, &file.attrs);
    let labels = path_of(args.labels, &file.labels);
    let g = load_graph(&graph_path, attrs.as_deref(), labels.as_deref())?;

    let n = g.node_count();
    let height = args.height.or(file.height).unwrap_or(2);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let mut cfg = TrainConfig::for_graph(n, height, seed)?;
    if let Some(gamma) = args.gamma.or(file.gamma) {
        cfg.gamma = if gamma == 0.0 { GAMMA_FLOOR } else { gamma };
    }
    if let Some(knn) = args.knn.or(file.knn) {
        cfg.knn = knn;
    }
    if let Some(temp) = args.temp.or(file.temp) {
        cfg.temperature = temp;
    }
    if let Some(lr) = args.lr.or(file.lr) {
        cfg.lr = lr;
    }
    if let Some(epochs) = args.epochs.or(file.epochs) {
        cfg.epochs = epochs;
    }

    let result = train(&g, &cfg)?;
    let tree = prune(&decode_tree(&result.outputs)?);
    let cluster_labels = clusters_natural(&tree, n)?;

    std::fs::create_dir_all(&out).map_err(Error::from)?;
    io::write_tree(&out.join("tree.json"), &tree)?;
    io::write_labels(&out.join("labels.txt"), &cluster_labels)?;
    io::write_loss_csv(&out.join("loss.csv"), &result.loss_trace)?;
    let feature_dim = g.attributes.as_ref().map_or(n, |a| a[0].len());
    io::save_checkpoint(
        &out.join("checkpoint.json"),
        &cfg,
        feature_dim,
        &result.params,
        Some(&result.beta),
    )?;

    let clusters = cluster_labels.iter().max().map_or(0, |m| m + 1);
    println!("trained {} epochs in {:.2}s", result.loss_trace.len(), result.elapsed_seconds);
    if let (Some(first), Some(last)) = (result.loss_trace.first(), result.loss_trace.last()) {
        println!("loss {first} -> {last}");
    }
    println!("decoded {} clusters over {} nodes", clusters, n);
    if let Some(truth) = &g.labels {
        println!(
            "against provided labels: nmi {:.4}, ari {:.4}, acc {:.4}",
            nmi(&cluster_labels, truth)?,
            ari(&cluster_labels, truth)?,
            acc(&cluster_labels, truth)?
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn run_coding_tree(args: CodingTreeArgs) -> Result<(), FailureKind> {
    let file = file_config(&args.config)?;
    let graph_path = need(path_of(args.graph, &file.graph), "graph")?;
    let out = need(path_of(args.out, &file.out), "out")?;
    let g = load_graph(&graph_path, None, None)?;
    let height = args.height.or(file.height).unwrap_or(2);
    let tree = greedy_coding_tree(&g, height)?;
    let labels = clusters_natural(&tree, g.node_count())?;
    std::fs::create_dir_all(&out).map_err(Error::from)?;
    io::write_tree(&out.join("tree.json"), &tree)?;
    io::write_labels(&out.join("labels.txt"), &labels)?;
    println!(
        "greedy height-{height} tree: entropy {}, {} clusters",
        tree_si(&g, &tree)?,
        labels.iter().max().map_or(0, |m| m + 1)
    );
    println!("artifacts in {}", out.display());
    Ok(())
}

fn run_decode(args: DecodeArgs) -> Result<(), FailureKind> {
    let file = file_config(&args.config)?;
    let graph_path = need(path_of(args.graph, &file.graph), "graph")?;
    let out = need(path_of(args.out, &file.out), "out")?;
    let attrs = path_of(args.attrs, &file.attrs);
    let g = load_graph(&graph_path, attrs.as_deref(), None)?;
    let (cfg, feature_dim, params, beta) = io::load_checkpoint(&out.join("checkpoint.json"))?;
    let n = g.node_count();
    let found = g.attributes.as_ref().map_or(n, |a| a[0].len());
    if found != feature_dim {
        return Err(Error::Dimension(format!(
            "checkpoint expects {feature_dim}-dimensional node features, graph provides {found}"
        ))
        .into());
    }
    let beta = beta.unwrap_or_else(|| Tensor::zeros(1, cfg.model.tree_dim));
    let tree = prune(&decode_tree(&infer(&g, &cfg, &params, &beta)?)?);
    let labels = clusters_natural(&tree, n)?;
    io::write_tree(&out.join("tree.json"), &tree)?;
    io::write_labels(&out.join("labels.txt"), &labels)?;
    println!(
        "decoded {} clusters, tree entropy {}",
        labels.iter().max().map_or(0, |m| m + 1),
        tree_si(&g, &tree)?
    );
    Ok(())
}

fn run_cluster(args: ClusterArgs) -> Result<(), FailureKind> {
    let file = file_config(&args.config)?;
    let out = need(path_of(args.out, &file.out), "out")?;
    let tree = io::read_tree(&out.join("tree.json"))?;
    let n = tree.nodes[tree.root].module.len();
    let labels = match args.k.or(file.k) {
        Some(k) => clusters_with_k(&tree, n, k, &LorentzSpace::standard())?,
        None => clusters_natural(&tree, n)?,
    };
    for (v, l) in labels.iter().enumerate() {
        println!("{v} {l}");
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), FailureKind> {
    let pred = io::read_labels(&args.pred)?;
    let truth = io::read_labels(&args.truth)?;
    let started = Instant::now();
    let json = match &args.graph {
        Some(path) => {
            let g: Graph = load_graph(path, None, None)?;
            let report = metric_report(&g, &pred, &truth, started.elapsed().as_secs_f64())?;
            serde_json::to_string_pretty(&report).map_err(Error::from)?
        }
        None => {
            let value = serde_json::json!({
                "nmi": nmi(&pred, &truth)?,
                "ari": ari(&pred, &truth)?,
                "acc": acc(&pred, &truth)?,
                "clusters": pred.iter().collect::<std::collections::BTreeSet<_>>().len(),
            });
            serde_json::to_string_pretty(&value).map_err(Error::from)?
        }
    };
    println!("{json}");
    Ok(())
}

fn run_check() -> Result<(), FailureKind> {
    let failures = check::run_suite(|name, outcome| match outcome {
        Ok(()) => println!("ok   {name}"),
        Err(e) => println!("FAIL {name}: {e}"),
    });
    if failures > 0 {
        return Err(FailureKind::Runtime(Error::Validation(format!(
            "{failures} invariant check(s) failed"
        ))));
    }
    println!("all invariants hold");
    Ok(())
}

fn run_viz(args: VizArgs) -> Result<(), FailureKind> {
    let file = file_config(&args.config)?;
    let out = need(path_of(args.out, &file.out), "out")?;
    let tree = io::read_tree(&out.join("tree.json"))?;
    let layout = io::poincare_layout(&tree, &LorentzSpace::standard())?;
    let json = io::layout_to_json(&layout)?;
    std::fs::write(out.join("viz.json"), &json).map_err(Error::from)?;
    std::fs::write(out.join("viz.svg"), io::render_svg(&layout)).map_err(Error::from)?;
    print!("{json}");
    Ok(())
}

enum FailureKind {
    Usage(String),
    Runtime(Error),
}

impl From<Usage> for FailureKind {
    fn from(u: Usage) -> FailureKind {
        FailureKind::Usage(u.0)
    }
}

impl From<Error> for FailureKind {
    fn from(e: Error) -> FailureKind {
        FailureKind::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => run_fit(args),
        Command::CodingTree(args) => run_coding_tree(args),
        Command::Decode(args) => run_decode(args),
        Command::Cluster(args) => run_cluster(args),
        Command::Eval(args) => run_eval(args),
        Command::Check => run_check(),
        Command::Viz(args) => run_viz(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(FailureKind::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(FailureKind::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
