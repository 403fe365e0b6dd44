//! A small transition-threshold run: random initial data at the
//! (c_u nu^{1/2}, c_theta nu^{5/6}) amplitudes, nonlinear evolution to
//! 20 nu^{-1/3}, stability verdict against the linearized run.
//!
//! Run with: cargo run --release --example threshold_sweep

use shearflow::base_flow::couette;
use shearflow::grid::build_grid;
use shearflow::nonlinear::threshold_point;

fn main() {
    let g = build_grid(97).unwrap();
    let p = couette(&g);
    println!("K = 4, c_u = c_theta = 0.1, Couette base flow");
    println!(
        "{:>9} {:>12} {:>12} {:>12} {:>12} {:>7}",
        "nu", "sum_E", "sum_G", "E/nu^(1/2)", "G/nu^(5/6)", "stable"
    );
    for (i, nu) in [1e-2, 3e-3, 1e-3].into_iter().enumerate() {
        let rep = threshold_point(&g, &p, nu, 0.1, 0.1, 4, 100 + i as u64, None).unwrap();
        println!(
            "{:>9.0e} {:>12.4e} {:>12.4e} {:>12.4} {:>12.4} {:>7}",
            rep.nu, rep.sum_e, rep.sum_g, rep.ratio_e, rep.ratio_g, rep.stayed_stable
        );
    }
}
