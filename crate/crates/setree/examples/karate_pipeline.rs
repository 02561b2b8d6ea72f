//! The whole pipeline on a real network: load Zachary's karate club, train
//! the hyperbolic model, decode and prune the partitioning tree, score the
//! clustering against the club split, compare with the discrete greedy
//! baseline, and drop a Poincaré-disc SVG of the tree into a temp directory.
//!
//! # Run
//!
//! ```bash
//! cargo run -p setree --example karate_pipeline
//! ```

use std::fs;
use std::path::Path;

use setree::decode::{clusters_natural, decode_tree, prune};
use setree::entropy::{greedy_coding_tree, tree_si};
use setree::graph::load_graph;
use setree::io::{layout_to_json, poincare_layout, render_svg, write_tree};
use setree::lorentz::LorentzSpace;
use setree::metrics::metric_report;
use setree::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("=== Karate Club Pipeline ===\n");

    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let g = load_graph(&data.join("karate.tsv"), None, Some(&data.join("karate_labels.txt")))?;
    let truth = g.labels.clone().expect("label file provides ground truth");
    println!("loaded {} members, {} ties", g.node_count(), g.edge_count());

    // Train with the stock configuration.
    println!("\nStep 1: Train");
    println!("-------------");
    let cfg = TrainConfig::for_graph(g.node_count(), 2, 0)?;
    let result = train(&g, &cfg)?;
    println!(
        "{} epochs in {:.2}s, loss {:.4} -> {:.4}",
        cfg.epochs,
        result.elapsed_seconds,
        result.loss_trace[0],
        result.loss_trace.last().unwrap()
    );

    // Decode the tree and read off the natural clustering.
    println!("\nStep 2: Decode");
    println!("--------------");
    let tree = prune(&decode_tree(&result.outputs)?);
    let pred = clusters_natural(&tree, g.node_count())?;
    println!("tree: height {}, {} nodes, entropy {:.4}", tree.height(), tree.nodes.len(), tree_si(&g, &tree)?);

    println!("\nStep 3: Score");
    println!("-------------");
    let report = metric_report(&g, &pred, &truth, result.elapsed_seconds)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    // The discrete baseline on the same graph.
    println!("\nStep 4: Discrete Baseline");
    println!("-------------------------");
    let baseline = greedy_coding_tree(&g, 2)?;
    let baseline_pred = clusters_natural(&baseline, g.node_count())?;
    let baseline_report = metric_report(&g, &baseline_pred, &truth, 0.0)?;
    println!(
        "greedy coding tree: entropy {:.4}, nmi {:.3}, acc {:.3}",
        tree_si(&g, &baseline)?,
        baseline_report.nmi,
        baseline_report.acc
    );

    // Persist the artifacts like the `fit` subcommand would.
    println!("\nStep 5: Artifacts");
    println!("-----------------");
    let out = std::env::temp_dir().join("setree-karate");
    fs::create_dir_all(&out)?;
    write_tree(&out.join("tree.json"), &tree)?;
    let layout = poincare_layout(&tree, &LorentzSpace::new(cfg.model.kappa)?)?;
    fs::write(out.join("viz.json"), layout_to_json(&layout)?)?;
    fs::write(out.join("viz.svg"), render_svg(&layout))?;
    println!("wrote tree.json, viz.json and viz.svg to {}", out.display());

    Ok(())
}
