//! The boundary-layer weight rho_k and its lambda-integral identity:
//! int (|s|^{3/2} rho + (nu k^2)^{1/4} |s|^{3/4} rho^{-1/2})^{-1} ds
//!   = C nu^{-1/6} |k|^{-1/3},
//! with C = 16 pi / (3 sqrt 3) from the scaling substitution.
//!
//! Run with: cargo run --release --example rho_weight_identity

use shearflow::grid::build_grid;
use shearflow::resolvent::{rho_integral_check, rho_weight};
use std::f64::consts::PI;

fn main() {
    let g = build_grid(129).unwrap();
    let rw = rho_weight(&g, 1e-3, 1).unwrap();
    println!(
        "rho weight (nu = 1e-3, k = 1): layer width = {:.3}, rho(0) = {}, rho(1/2) = {}",
        rw.layer_width,
        rw.values[0],
        rw.values[g.n / 2]
    );

    let c0 = 16.0 * PI / (3.0 * 3.0f64.sqrt());
    println!("analytic constant 16 pi / (3 sqrt 3) = {c0:.8}");
    println!(
        "{:>10} {:>4} {:>14} {:>12} {:>12}",
        "nu", "k", "value", "ratio", "ramp ratio"
    );
    for nu in [1e-3, 1e-4, 1e-5, 1e-6] {
        for k in [1, 8] {
            let c = rho_integral_check(nu, k).unwrap();
            println!(
                "{:>10.0e} {:>4} {:>14.6e} {:>12.8} {:>12.8}",
                nu, k, c.value, c.ratio, c.ratio_ramp
            );
        }
    }
}
