//! A tour of the Lorentz model of hyperbolic space: lifting spatial vectors
//! onto the hyperboloid, geodesic distances, exp/log maps, Lorentz boosts as
//! isometries, the closed-form weighted midpoint, and the projection to the
//! Poincaré ball.
//!
//! # Run
//!
//! ```bash
//! cargo run -p setree --example lorentz_geometry
//! ```

use nalgebra::DVector;
use setree::lorentz::{minkowski_inner, LorentzBoost, LorentzSpace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("=== Lorentz Model Geometry ===\n");

    let space = LorentzSpace::standard(); // curvature parameter 1.0

    // Example 1: points and distances
    println!("Example 1: Points on the Hyperboloid");
    println!("------------------------------------");

    let a = space.lift_spatial(&DVector::from_vec(vec![0.3, -0.2]));
    let b = space.lift_spatial(&DVector::from_vec(vec![-0.5, 0.6]));
    println!("a = {:?}", a.0.as_slice());
    println!("b = {:?}", b.0.as_slice());
    println!("<a,a>_L = {:.12} (always -1/kappa)", minkowski_inner(&a.0, &a.0));
    println!("on manifold: {} {}", space.on_manifold(&a, 1e-12), space.on_manifold(&b, 1e-12));
    println!("d(a,b) = {:.6}", space.distance(&a, &b)?);
    println!("d(a,a) = {:.6}", space.distance(&a, &a)?);

    // Example 2: exp and log maps invert each other
    println!("\nExample 2: Exponential and Logarithmic Maps");
    println!("-------------------------------------------");

    let u = space.log_map(&a, &b)?;
    println!("|log_a(b)| = {:.6} (equals the geodesic distance)", u.norm());
    let back = space.exp_map(&a, &u)?;
    let roundtrip = (&back.0 - &b.0).abs().max();
    println!("exp_a(log_a(b)) recovers b to {roundtrip:.2e}");

    // Example 3: boosts are isometries
    println!("\nExample 3: Lorentz Boosts");
    println!("-------------------------");

    let boost = LorentzBoost::from_beta(&DVector::from_vec(vec![0.4, -0.1]))?;
    println!("metric defect |L^T eta L - eta| = {:.2e}", boost.metric_defect());
    let ba = boost.apply(&a)?;
    let bb = boost.apply(&b)?;
    println!("d(a,b)           = {:.12}", space.distance(&a, &b)?);
    println!("d(boost a, boost b) = {:.12}", space.distance(&ba, &bb)?);
    println!("boosted points stay on the manifold: {}", space.on_manifold(&ba, 1e-9));

    // Example 4: the weighted midpoint
    println!("\nExample 4: Weighted Midpoint");
    println!("----------------------------");

    let pts = vec![
        space.lift_spatial(&DVector::from_vec(vec![0.8, 0.0])),
        space.lift_spatial(&DVector::from_vec(vec![-0.3, 0.5])),
        space.lift_spatial(&DVector::from_vec(vec![0.1, -0.7])),
    ];
    let weights = [3.0, 1.0, 1.0];
    let mid = space.weighted_midpoint(&pts, &weights)?;
    println!("midpoint = {:?}", mid.0.as_slice());
    println!("on manifold: {}", space.on_manifold(&mid, 1e-9));

    // The midpoint minimises the weighted squared Lorentz distance
    // sum_i w_i * (2/kappa - 2<x_i, c>_L); nudging it anywhere raises the
    // objective.
    let objective = |c: &setree::lorentz::LorentzPoint| -> f64 {
        pts.iter()
            .zip(weights)
            .map(|(p, w)| w * (2.0 - 2.0 * minkowski_inner(&p.0, &c.0)))
            .sum()
    };
    let at_mid = objective(&mid);
    let mut worst = f64::INFINITY;
    for probe in 0..8 {
        let angle = probe as f64 * std::f64::consts::FRAC_PI_4;
        let dir = DVector::from_vec(vec![0.0, 0.05 * angle.cos(), 0.05 * angle.sin()]);
        let tangent = space.project_tangent(&mid, &dir);
        let nudged = space.exp_map(&mid, &tangent)?;
        worst = worst.min(objective(&nudged));
    }
    println!("objective at midpoint: {at_mid:.9}");
    println!("best nudged objective: {worst:.9} (higher)");
    assert!(at_mid < worst);

    // Example 5: down to the Poincaré ball
    println!("\nExample 5: Poincaré Projection");
    println!("------------------------------");

    for (name, p) in [("a", &a), ("b", &b), ("midpoint", &mid)] {
        let disc = space.to_poincare(p);
        println!("{name:9} -> ({:+.4}, {:+.4}), norm {:.4}", disc[0], disc[1], disc.norm());
        assert!(disc.norm() < 1.0);
    }

    Ok(())
}
