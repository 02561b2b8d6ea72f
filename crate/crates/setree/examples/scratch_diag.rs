//! Temporary diagnostic: where the two-K8 run gets stuck.

use setree::decode::{clusters_natural, decode_tree, prune};
use setree::entropy::{tree_si, PartitionTree};
use setree::graph::Graph;
use setree::soft::{total_dsi, LevelAssignment};
use setree::train::{train, TrainConfig};

fn two_k8() -> Graph {
    let mut edges = Vec::new();
    for base in [0, 8] {
        for i in 0..8 {
            for j in (i + 1)..8 {
                edges.push((base + i, base + j, 1.0));
            }
        }
    }
    edges.push((0, 8, 1.0));
    Graph::from_edges(16, &edges).unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = two_k8();

    // Reference values.
    let planted = PartitionTree::two_level(16, &[(0..8).collect(), (8..16).collect()])?;
    let stuck = PartitionTree::two_level(
        16,
        &[(1..8).collect(), (9..16).collect(), vec![0, 8]],
    )?;
    println!("hard tree_si planted: {:.6}", tree_si(&g, &planted)?);
    println!("hard tree_si 3-way:   {:.6}", tree_si(&g, &stuck)?);
    let c_planted = LevelAssignment::from_tree(&planted, 16)?;
    println!("soft total_dsi at planted: {:.6}", total_dsi(&g, &c_planted)?);

    for lr in [0.003, 0.03, 0.3] {
        let mut cfg = TrainConfig::for_graph(16, 2, 0)?;
        cfg.lr = lr;
        let result = train(&g, &cfg)?;
        let tree = prune(&decode_tree(&result.outputs)?);
        let labels = clusters_natural(&tree, 16)?;
        println!(
            "\nlr {lr}: loss {:.4} -> {:.4}, clusters {labels:?}",
            result.loss_trace[0],
            result.loss_trace.last().unwrap()
        );
        if lr == 0.003 {
            let z = result.outputs.z_level(2);
            println!("embeddings (level H):");
            for v in [0usize, 1, 2, 7, 8, 9, 15] {
                let row: Vec<f64> = (0..z.cols()).map(|j| z.get(v, j)).collect();
                println!("  z[{v:2}] = {row:?}");
            }
            let c = result.outputs.c_level(2);
            println!("assignment rows (max entries):");
            for v in [0usize, 1, 8, 9] {
                let row: Vec<f64> = (0..c.cols()).map(|j| (c.get(v, j) * 1000.0).round() / 1000.0).collect();
                println!("  c[{v:2}] = {row:?}");
            }
        }
    }
    Ok(())
}
