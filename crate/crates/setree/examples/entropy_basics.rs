//! Structural entropy from first principles: the one-dimensional (degree)
//! entropy of a graph, the per-node structural information of a partitioning
//! tree, and the exhaustive search for the best two-level tree.
//!
//! # Run
//!
//! ```bash
//! cargo run -p setree --example entropy_basics
//! ```

use setree::entropy::{brute_force_optimal_tree, node_si, tree_si, PartitionTree};
use setree::graph::Graph;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("=== Structural Entropy Basics ===\n");

    // Example 1: degree entropy of a few shapes
    println!("Example 1: One-Dimensional Entropy");
    println!("----------------------------------");

    let path = Graph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])?;
    let star = Graph::from_edges(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)])?;
    let clique = Graph::from_edges(
        4,
        &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)],
    )?;

    println!("path P4:   {:.4} bits", path.one_dim_entropy()?);
    println!("star S4:   {:.4} bits", star.one_dim_entropy()?);
    println!("clique K4: {:.4} bits (uniform degrees -> log2(4) = 2)", clique.one_dim_entropy()?);

    // Example 2: a tree's entropy rewards a good split
    println!("\nExample 2: Two Triangles with a Bridge");
    println!("--------------------------------------");

    let g = Graph::from_edges(
        6,
        &[
            (0, 1, 1.0),
            (1, 2, 1.0),
            (2, 0, 1.0), // triangle A
            (3, 4, 1.0),
            (4, 5, 1.0),
            (5, 3, 1.0), // triangle B
            (2, 3, 1.0), // bridge
        ],
    )?;

    let flat = PartitionTree::flat(6);
    let split = PartitionTree::two_level(6, &[vec![0, 1, 2], vec![3, 4, 5]])?;
    let crossed = PartitionTree::two_level(6, &[vec![0, 1, 4], vec![2, 3, 5]])?;

    println!("flat tree (root over leaves):      {:.4} bits", tree_si(&g, &flat)?);
    println!("split along the bridge:            {:.4} bits", tree_si(&g, &split)?);
    println!("split across the triangles:        {:.4} bits", tree_si(&g, &crossed)?);
    println!("degree entropy (flat tree equals): {:.4} bits", g.one_dim_entropy()?);

    // Per-node contributions: interior modules are cheap when their cut is
    // small, leaves are cheap when their parent is small.
    println!("\nPer-node structural information of the bridge split:");
    for alpha in 0..split.nodes.len() {
        if alpha == split.root {
            continue;
        }
        let node = &split.nodes[alpha];
        let kind = if node.is_leaf() { "leaf  " } else { "module" };
        println!(
            "  {kind} {:?}: {:.4} bits",
            node.module,
            node_si(&g, &split, alpha)?
        );
    }

    // Example 3: exhaustive optimum
    println!("\nExample 3: Brute-Force Optimal Two-Level Tree");
    println!("---------------------------------------------");

    let (best, si) = brute_force_optimal_tree(&g, 2)?;
    let mut modules: Vec<Vec<usize>> = best
        .nodes
        .iter()
        .filter(|n| n.height == 1 && !n.module.is_empty())
        .map(|n| n.module.clone())
        .collect();
    modules.sort();
    println!("optimal entropy: {si:.4} bits");
    println!("optimal modules: {modules:?}");
    assert_eq!(modules, vec![vec![0, 1, 2], vec![3, 4, 5]]);
    println!("the optimum splits exactly along the bridge");

    Ok(())
}
