//! One Orr-Sommerfeld resolvent solve decomposed into the Navier-slip part
//! and the two wall correctors, compared against the monolithic clamped
//! solve.
//!
//! Run with: cargo run --release --example resolvent_decomposition

use num_complex::Complex64;
use shearflow::base_flow::validate_profile;
use shearflow::grid::build_grid;
use shearflow::resolvent::{
    assemble_clamped, os_residual, solve_clamped_monolithic, ResolventProblem,
};
use std::f64::consts::PI;

fn main() {
    let g = build_grid(129).unwrap();
    let u = g.nodes.mapv(|y| y + 0.1 * y * y);
    let profile = validate_profile(&g, &u, false).unwrap();
    let nu = 1e-4;
    let k = 1;
    let lambda = 0.5;
    let forcing = g.nodes.mapv(|y| Complex64::new((PI * y).sin(), 0.0));
    let problem = ResolventProblem::new(&g, nu, k, lambda, &profile, forcing).unwrap();

    let sol = assemble_clamped(&g, &problem).unwrap();
    println!("nu = {nu:.0e}, k = {k}, lambda = {lambda}");
    println!("  ||w_Na||_L2        = {:.6e}", g.l2_norm(&sol.w_na));
    println!(
        "  w_Na wall values   = {:.2e}, {:.2e}",
        sol.w_na[0].norm(),
        sol.w_na[g.n - 1].norm()
    );
    println!(
        "  c1 (sinh window)   = {:.6e} + {:.6e} i",
        sol.c1.re, sol.c1.im
    );
    println!(
        "  c2 (sinh window)   = {:.6e} + {:.6e} i",
        sol.c2.re, sol.c2.im
    );
    println!(
        "  assembly coeff w1  = {:.6e} + {:.6e} i",
        sol.coeff_w1.re, sol.coeff_w1.im
    );
    println!(
        "  assembly coeff w2  = {:.6e} + {:.6e} i",
        sol.coeff_w2.re, sol.coeff_w2.im
    );

    // clamped boundary values of the assembled stream function
    let d0: Complex64 = (0..g.n).map(|j| g.d1[[0, j]] * sol.phi_total[j]).sum();
    let d1: Complex64 = (0..g.n)
        .map(|j| g.d1[[g.n - 1, j]] * sol.phi_total[j])
        .sum();
    println!(
        "  clamped BCs: |phi(0)| = {:.1e}, |phi(1)| = {:.1e}, |phi'(0)| = {:.1e}, |phi'(1)| = {:.1e}",
        sol.phi_total[0].norm(),
        sol.phi_total[g.n - 1].norm(),
        d0.norm(),
        d1.norm()
    );

    let (wm, _) = solve_clamped_monolithic(&g, &problem).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..g.n {
        num += g.quad_weights[i] * (sol.w_total[i] - wm[i]).norm_sqr();
        den += g.quad_weights[i] * wm[i].norm_sqr();
    }
    println!(
        "  assembled vs monolithic: relative L2 difference = {:.3e}",
        (num / den).sqrt()
    );
    println!(
        "  OS equation residual (Navier-slip part) = {:.3e}",
        os_residual(&g, &problem, &sol.w_na, &sol.phi_na)
    );
}
