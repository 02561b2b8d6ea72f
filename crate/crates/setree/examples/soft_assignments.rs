//! Differentiable structural information: hard trees re-expressed as stacks
//! of assignment matrices, the two independent routes to the same level term
//! (edge sums vs. volume aggregates), the additivity identity, and why empty
//! or duplicated levels cost nothing.
//!
//! # Run
//!
//! ```bash
//! cargo run -p setree --example soft_assignments
//! ```

use setree::entropy::{tree_si, PartitionTree};
use setree::graph::Graph;
use setree::soft::{
    additivity_decomposition, level_dsi_edgewise, level_dsi_nodewise, total_dsi, LevelAssignment,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("=== Soft Assignments and Structural Information ===\n");

    // A small weighted graph with a natural 3/4 split.
    let g = Graph::from_edges(
        7,
        &[
            (0, 1, 2.0),
            (1, 2, 1.5),
            (2, 0, 1.0),
            (3, 4, 1.0),
            (4, 5, 2.0),
            (5, 6, 1.0),
            (6, 3, 1.0),
            (2, 3, 0.5), // weak bridge
        ],
    )?;
    let tree = PartitionTree::two_level(7, &[vec![0, 1, 2], vec![3, 4, 5, 6]])?;

    // Example 1: hard tree == hard assignment stack
    println!("Example 1: Hard Equivalence");
    println!("---------------------------");

    let c = LevelAssignment::from_tree(&tree, 7)?;
    println!("levels: {:?}", c.levels.iter().map(|t| t.shape()).collect::<Vec<_>>());
    println!("stack is hard: {}", c.is_hard());

    let discrete = tree_si(&g, &tree)?;
    let soft = total_dsi(&g, &c)?;
    println!("tree entropy (discrete recursion): {discrete:.12}");
    println!("total DSI (matrix formulation):    {soft:.12}");
    assert!((discrete - soft).abs() < 1e-9);

    // Example 2: two routes to every level term
    println!("\nExample 2: Edgewise vs Nodewise Level Terms");
    println!("-------------------------------------------");

    for h in 1..=c.height() {
        let by_edges = level_dsi_edgewise(&g, &c, h)?;
        let by_volumes = level_dsi_nodewise(&g, &c, h)?;
        println!("level {h}: edgewise {by_edges:.12}, nodewise {by_volumes:.12}");
        assert!((by_edges - by_volumes).abs() < 1e-9);
    }

    // Example 3: additivity
    println!("\nExample 3: Additivity");
    println!("---------------------");

    let layered = additivity_decomposition(&g, &c)?;
    let degree = g.one_dim_entropy()?;
    println!("sum of layered entropies: {layered:.12}");
    println!("degree entropy:           {degree:.12}");
    assert!((layered - degree).abs() < 1e-9);

    // Example 4: structurally inert edits
    println!("\nExample 4: Inert Tree Edits");
    println!("---------------------------");

    let mut padded = c.clone();
    padded.insert_empty_parent(2)?;
    let with_empty = total_dsi(&g, &padded)?;
    println!("after inserting an empty module: {with_empty:.12} (delta {:.2e})", (with_empty - soft).abs());
    assert!((with_empty - soft).abs() < 1e-10);

    let mut duplicated = c.clone();
    duplicated.duplicate_level(1)?;
    let with_dup = total_dsi(&g, &duplicated)?;
    println!("after duplicating a level:       {with_dup:.12} (delta {:.2e})", (with_dup - soft).abs());
    assert!((with_dup - soft).abs() < 1e-10);

    println!("\nheight grew from {} to {} without changing the entropy", c.height(), duplicated.height());

    Ok(())
}
