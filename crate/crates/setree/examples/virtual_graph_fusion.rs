//! The virtual graph: similarities between hyperbolic embeddings, sparsified
//! to a symmetric k-nearest-neighbour pattern, then fused with the observed
//! adjacency. When the embeddings agree with the planted structure, fusion
//! tightens every cluster: conductance of the planted cut never goes up.
//!
//! # Run
//!
//! ```bash
//! cargo run -p setree --example virtual_graph_fusion
//! ```

use nalgebra::{DMatrix, DVector};
use setree::autodiff::Tensor;
use setree::graph::{fuse_adjacency, knn_sparsify, Graph, NodeSubset};
use setree::lorentz::LorentzSpace;
use setree::train::virtual_adjacency;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("=== Virtual Graphs and Fusion ===\n");

    // A noisy planted partition: two groups of 5, a few cross edges.
    let n = 10;
    let mut edges = Vec::new();
    for base in [0, 5] {
        for i in 0..5 {
            for j in (i + 1)..5 {
                if (i + j + base) % 4 != 0 {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
    }
    edges.extend_from_slice(&[(0, 5, 1.0), (2, 7, 1.0), (4, 9, 1.0)]);
    let g = Graph::from_edges(n, &edges)?;
    println!("{} nodes, {} edges, 3 of them cross the planted cut", n, g.edge_count());

    // Example 1: similarities between embeddings
    println!("\nExample 1: Virtual Adjacency from Embeddings");
    println!("--------------------------------------------");

    // Hand-made embeddings that respect the planted groups: group 0 sits
    // around (-0.6, 0), group 1 around (+0.6, 0).
    let space = LorentzSpace::standard();
    let mut rows = Vec::new();
    for v in 0..n {
        let side = if v < 5 { -0.6 } else { 0.6 };
        let jitter = 0.08 * (v as f64 % 5.0) - 0.16;
        let p = space.lift_spatial(&DVector::from_vec(vec![side + 0.1 * jitter, jitter]));
        rows.push(p.0);
    }
    let z = Tensor::from_fn(n, 3, |i, j| rows[i][j]);
    let beta = Tensor::zeros(1, 2);

    let a_tilde = virtual_adjacency(&z, &beta, 1.0, 3, 1.0)?;
    let mut cross_max = 0.0f64;
    let mut intra_min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let w = a_tilde.get(i, j);
            assert!((0.0..=1.0).contains(&w));
            if i == j {
                assert_eq!(w, 0.0);
            } else if (i < 5) == (j < 5) {
                if w > 0.0 {
                    intra_min = intra_min.min(w);
                }
            } else {
                cross_max = cross_max.max(w);
            }
        }
    }
    println!("strongest cross-group similarity: {cross_max:.4}");
    println!("weakest kept intra-group link:    {intra_min:.4}");

    // Example 2: fusing observed and virtual edges
    println!("\nExample 2: Fusion Lowers the Planted Cut's Conductance");
    println!("------------------------------------------------------");

    let a = g.adjacency_matrix();
    let a_tilde_dense = DMatrix::from_fn(n, n, |i, j| a_tilde.get(i, j));
    let planted = NodeSubset::new(0..5);

    let before = g.subset_conductance(&planted)?;
    for gamma in [0.25, 0.5, 1.0] {
        let fused = fuse_adjacency(&a, &a_tilde_dense, gamma)?;
        let fg = Graph::from_dense(&fused)?;
        let after = fg.subset_conductance(&planted)?;
        println!("gamma {gamma:4}: conductance {before:.4} -> {after:.4}");
        assert!(after <= before + 1e-12);
    }

    // Example 3: k-nearest-neighbour sparsification on its own
    println!("\nExample 3: Symmetric kNN Sparsification");
    println!("---------------------------------------");

    let dense = DMatrix::from_fn(6, 6, |i, j| {
        if i == j {
            0.0
        } else {
            1.0 / (1.0 + (i as f64 - j as f64).abs())
        }
    });
    let sparse = knn_sparsify(&dense, 2)?;
    let kept = sparse.iter().filter(|&&w| w > 0.0).count();
    println!("kept {kept} of {} off-diagonal entries", 6 * 5);
    assert_eq!(sparse, sparse.transpose());
    println!("result is symmetric: union of row-wise top-2 picks");

    Ok(())
}
