//! On-disk formats for run artifacts: tree documents (JSON), label files,
//! loss traces (CSV), Poincaré layouts (JSON and SVG), model checkpoints
//! (JSON with base64 tensor buffers), and run configuration files whose keys
//! mirror the command-line flags.
//!
//! Everything here is deterministic: writing the same value twice produces
//! byte-identical files, and floats survive a write/read round trip exactly
//! (shortest-round-trip decimal form in JSON/CSV, raw little-endian bytes in
//! checkpoints).

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::entropy::{PartitionTree, TreeNode};
use crate::error::{Error, Result};
use crate::lorentz::{LorentzPoint, LorentzSpace};
use crate::net::LsenetParams;
use crate::train::TrainConfig;

/// One tree node as stored in a tree document. `coords` is `null` for trees
/// that carry no embedding (e.g. the discrete greedy baseline).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeNodeDoc {
    pub id: usize,
    pub height: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub module: Vec<usize>,
    #[serde(default)]
    pub coords: Option<Vec<f64>>,
}

/// Serializable form of a [`PartitionTree`]: the tree height plus every node
/// in id order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeDocument {
    pub height: usize,
    pub nodes: Vec<TreeNodeDoc>,
}

impl TreeDocument {
    pub fn from_tree(t: &PartitionTree) -> TreeDocument {
        let height = t.nodes.iter().map(|n| n.height).max().unwrap_or(0);
        let nodes = t
            .nodes
            .iter()
            .map(|n| TreeNodeDoc {
                id: n.id,
                height: n.height,
                parent: n.parent,
                children: n.children.clone(),
                module: n.module.clone(),
                coords: n.coords.as_ref().map(|p| p.0.iter().copied().collect()),
            })
            .collect();
        TreeDocument { height, nodes }
    }

    /// Rebuilds the in-memory tree, checking that ids are dense, that parent
    /// and child links agree, and that heights increase by one along edges.
    pub fn into_tree(&self) -> Result<PartitionTree> {
        let mut root = None;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Validation(format!(
                    "tree document node at position {i} has id {}; ids must be dense",
                    n.id
                )));
            }
            match n.parent {
                None => {
                    if let Some(r) = root {
                        return Err(Error::Validation(format!(
                            "two roots in tree document: {r} and {i}"
                        )));
                    }
                    root = Some(i);
                }
                Some(p) => {
                    let pn = self.nodes.get(p).ok_or_else(|| {
                        Error::Validation(format!("node {i} has out-of-range parent {p}"))
                    })?;
                    if !pn.children.contains(&i) {
                        return Err(Error::Validation(format!(
                            "node {i} claims parent {p}, which does not list it as a child"
                        )));
                    }
                    if n.height != pn.height + 1 {
                        return Err(Error::Validation(format!(
                            "node {i} at height {} under parent at height {}",
                            n.height, pn.height
                        )));
                    }
                }
            }
            for &c in &n.children {
                let cn = self.nodes.get(c).ok_or_else(|| {
                    Error::Validation(format!("node {i} has out-of-range child {c}"))
                })?;
                if cn.parent != Some(i) {
                    return Err(Error::Validation(format!(
                        "node {i} lists child {c}, which points at parent {:?}",
                        cn.parent
                    )));
                }
            }
        }
        let root =
            root.ok_or_else(|| Error::Validation("tree document has no root".to_string()))?;
        let nodes = self
            .nodes
            .iter()
            .map(|n| TreeNode {
                id: n.id,
                parent: n.parent,
                children: n.children.clone(),
                module: n.module.clone(),
                height: n.height,
                coords: n.coords.as_ref().map(|c| LorentzPoint(DVector::from_vec(c.clone()))),
            })
            .collect();
        Ok(PartitionTree { nodes, root })
    }
}

pub fn write_tree(path: &Path, t: &PartitionTree) -> Result<()> {
    let doc = TreeDocument::from_tree(t);
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_tree(path: &Path) -> Result<PartitionTree> {
    let doc: TreeDocument = serde_json::from_str(&fs::read_to_string(path)?)?;
    doc.into_tree()
}

/// Writes one `node label` pair per line, node ids ascending.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::new();
    for (v, l) in labels.iter().enumerate() {
        text.push_str(&format!("{v} {l}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads a label file on its own (no graph in hand): `node label` pairs,
/// `#` comments and blank lines skipped. The node ids must cover 0..n for
/// some n, each exactly once.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>, what: &str| -> Result<usize> {
            tok.ok_or_else(|| Error::Parse { line: idx + 1, msg: format!("missing {what}") })?
                .parse::<usize>()
                .map_err(|e| Error::Parse { line: idx + 1, msg: format!("bad {what}: {e}") })
        };
        let node = parse(it.next(), "node id")?;
        let label = parse(it.next(), "label")?;
        pairs.push((idx + 1, node, label));
    }
    let n = pairs.len();
    let mut labels = vec![None; n];
    for (line, node, label) in pairs {
        let slot = labels.get_mut(node).ok_or_else(|| Error::Parse {
            line,
            msg: format!("node id {node} out of range for {n} labeled nodes"),
        })?;
        if slot.is_some() {
            return Err(Error::Parse { line, msg: format!("duplicate label for node {node}") });
        }
        *slot = Some(label);
    }
    Ok(labels.into_iter().flatten().collect())
}

/// Writes the per-epoch loss trace as `epoch,loss` CSV.
pub fn write_loss_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut text = String::from("epoch,loss\n");
    for (epoch, loss) in trace.iter().enumerate() {
        text.push_str(&format!("{epoch},{loss}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "epoch,loss")) => {}
        _ => return Err(Error::Parse { line: 1, msg: "expected header 'epoch,loss'".into() }),
    }
    let mut trace = Vec::new();
    for (idx, line) in lines {
        let (epoch, loss) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: idx + 1,
            msg: "expected 'epoch,loss' row".into(),
        })?;
        let epoch: usize = epoch.parse().map_err(|e| Error::Parse {
            line: idx + 1,
            msg: format!("bad epoch: {e}"),
        })?;
        if epoch != trace.len() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("epochs out of order: expected {}, got {epoch}", trace.len()),
            });
        }
        trace.push(loss.parse::<f64>().map_err(|e| Error::Parse {
            line: idx + 1,
            msg: format!("bad loss: {e}"),
        })?);
    }
    Ok(trace)
}

/// A tree node projected onto the Poincaré disc (first two coordinates).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VizNode {
    pub id: usize,
    pub height: usize,
    pub xy: [f64; 2],
}

/// Projects every node's embedding to the Poincaré ball and keeps the first
/// two coordinates, so each point lands strictly inside the unit disc.
pub fn poincare_layout(t: &PartitionTree, space: &LorentzSpace) -> Result<Vec<VizNode>> {
    t.nodes
        .iter()
        .map(|n| {
            let p = n.coords.as_ref().ok_or_else(|| {
                Error::Validation(format!("tree node {} has no coordinates", n.id))
            })?;
            let disc = space.to_poincare(p);
            let xy = [disc[0], if disc.len() > 1 { disc[1] } else { 0.0 }];
            Ok(VizNode { id: n.id, height: n.height, xy })
        })
        .collect()
}

pub fn layout_to_json(layout: &[VizNode]) -> Result<String> {
    let mut text = serde_json::to_string_pretty(layout)?;
    text.push('\n');
    Ok(text)
}

/// Renders the layout as a static SVG scatter: the unit-disc outline plus one
/// circle per tree node, filled by height and sized so coarser nodes draw
/// larger.
pub fn render_svg(layout: &[VizNode]) -> String {
    const SIZE: f64 = 600.0;
    const RADIUS: f64 = 280.0;
    const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
    let center = SIZE / 2.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <circle cx=\"{center}\" cy=\"{center}\" r=\"{RADIUS}\" fill=\"none\" \
         stroke=\"#999999\" stroke-width=\"1\"/>\n"
    );
    let max_height = layout.iter().map(|n| n.height).max().unwrap_or(0);
    for node in layout {
        let x = center + RADIUS * node.xy[0];
        let y = center - RADIUS * node.xy[1];
        let r = 3.0 + 2.0 * (max_height - node.height) as f64;
        let fill = PALETTE[node.height % PALETTE.len()];
        svg.push_str(&format!(
            "<circle cx=\"{x}\" cy=\"{y}\" r=\"{r}\" fill=\"{fill}\" fill-opacity=\"0.8\">\
             <title>node {} (height {})</title></circle>\n",
            node.id, node.height
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorDoc {
    name: String,
    rows: usize,
    cols: usize,
    /// Base64 of the row-major f64 little-endian buffer.
    data: String,
}

fn encode_tensor(name: &str, t: &Tensor) -> TensorDoc {
    let mut bytes = Vec::with_capacity(t.data().len() * 8);
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    TensorDoc {
        name: name.to_string(),
        rows: t.rows(),
        cols: t.cols(),
        data: BASE64.encode(bytes),
    }
}

fn decode_tensor(doc: &TensorDoc) -> Result<Tensor> {
    let bytes = BASE64
        .decode(&doc.data)
        .map_err(|e| Error::Validation(format!("tensor {}: bad base64: {e}", doc.name)))?;
    if bytes.len() != doc.rows * doc.cols * 8 {
        return Err(Error::Validation(format!(
            "tensor {}: buffer holds {} bytes, shape {}x{} needs {}",
            doc.name,
            bytes.len(),
            doc.rows,
            doc.cols,
            doc.rows * doc.cols * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::from_fn(doc.rows, doc.cols, |i, j| values[i * doc.cols + j]))
}

/// A saved model: the full run configuration, raw feature width, and every
/// learnable tensor (plus the boost velocity when training produced one).
/// Storing the whole [`TrainConfig`] — not just the architecture — lets
/// [`crate::train::infer`] rebuild the exact virtual graph and fused forward
/// pass that produced the run's tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub feature_dim: usize,
    tensors: Vec<TensorDoc>,
}

pub const BOOST_TENSOR_NAME: &str = "boost.beta";

pub fn save_checkpoint(
    path: &Path,
    cfg: &TrainConfig,
    feature_dim: usize,
    params: &LsenetParams,
    beta: Option<&Tensor>,
) -> Result<()> {
    let mut tensors: Vec<TensorDoc> =
        params.named().iter().map(|(name, t)| encode_tensor(name, t)).collect();
    if let Some(b) = beta {
        tensors.push(encode_tensor(BOOST_TENSOR_NAME, b));
    }
    let ckpt = Checkpoint { config: cfg.clone(), feature_dim, tensors };
    let mut text = serde_json::to_string_pretty(&ckpt)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(TrainConfig, usize, LsenetParams, Option<Tensor>)> {
    let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    let mut params = LsenetParams::init(&ckpt.config.model, ckpt.feature_dim)?;
    let expected: Vec<String> = params.named().iter().map(|(n, _)| n.clone()).collect();
    let mut beta = None;
    let mut seen = Vec::new();
    for doc in &ckpt.tensors {
        let t = decode_tensor(doc)?;
        if doc.name == BOOST_TENSOR_NAME {
            beta = Some(t);
        } else {
            params.set_tensor(&doc.name, t)?;
            seen.push(doc.name.clone());
        }
    }
    for name in &expected {
        if !seen.contains(name) {
            return Err(Error::Validation(format!("checkpoint is missing parameter {name}")));
        }
    }
    Ok((ckpt.config, ckpt.feature_dim, params, beta))
}

/// A run configuration file. Keys mirror the command-line flags one-for-one;
/// explicit flags take precedence over file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub graph: Option<String>,
    pub attrs: Option<String>,
    pub labels: Option<String>,
    pub height: Option<usize>,
    pub gamma: Option<f64>,
    pub knn: Option<usize>,
    pub temp: Option<f64>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub out: Option<String>,
}

pub fn read_config_file(path: &Path) -> Result<ConfigFile> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
