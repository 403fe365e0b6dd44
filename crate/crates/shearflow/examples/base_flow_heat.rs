//! Base-flow admissibility and heat evolution with pinned wall values.
//!
//! Run with: cargo run --release --example base_flow_heat

use shearflow::base_flow::{heat_evolve, heat_lipschitz_ratio, sine_perturbed, validate_profile};
use shearflow::grid::build_grid;
use std::f64::consts::PI;

fn main() {
    let g = build_grid(65).unwrap();

    let p = sine_perturbed(&g, 0.05);
    println!("U(y) = y - 0.05 sin(pi y):");
    println!("  monotonicity floor c0         = {:.6}", p.c0);
    println!("  concavity sign                = {}", p.concavity_sign);
    println!("  discrete H^4 norm             = {:.6}", p.sobolev_h4);

    let non_monotone = g.nodes.mapv(|y| (3.0 * PI * y).sin());
    println!(
        "U(y) = sin(3 pi y): {}",
        validate_profile(&g, &non_monotone, false).unwrap_err()
    );

    let nu = 1e-3;
    for t in [0.0, 10.0, 100.0] {
        let q = heat_evolve(&g, &p, nu, t);
        let dev = (0..g.n).fold(0.0f64, |a, i| a.max((q.values[i] - g.nodes[i]).abs()));
        println!("t = {t:6}: min U' = {:.6}, max |U - y| = {:.4e}", q.c0, dev);
    }

    let r = heat_lipschitz_ratio(&g, &p, nu, 1.0, 0.0).unwrap();
    println!("||U(1) - U(0)||_inf / (nu ||U_in||_H4) = {r:.6}");
}
