//! Enhanced-dissipation rate measurement: unforced linear evolution of a
//! single vorticity mode, decay fit of the weighted vorticity norm over
//! [2, 10] nu^{-1/3}, plus the inviscid-damping ratio.
//!
//! Run with: cargo run --release --example enhanced_dissipation

use shearflow::base_flow::couette;
use shearflow::experiment::{decay_rate_point, fit_exponent};
use shearflow::grid::build_grid;

fn main() {
    let g = build_grid(129).unwrap();
    let p = couette(&g);
    let mut pts = Vec::new();
    println!("Couette, k = 1:");
    for nu in [1e-3, 1e-4, 1e-5] {
        let pt = decay_rate_point(&g, &p, nu, 1).unwrap();
        println!(
            "  nu = {nu:.0e}: gamma = {:.4e}, gamma/nu^(1/3) = {:.3}, |k| ||e u||_L2L2 / ||omega_in|| = {:.4}",
            pt.gamma, pt.gamma_over_nu13, pt.u_damping
        );
        pts.push((nu, pt.gamma));
    }
    let (slope, _, ci) = fit_exponent(&pts).unwrap();
    println!("fitted exponent of gamma vs nu: {slope:.4} +/- {ci:.4} (enhanced dissipation ~ 1/3)");
}
