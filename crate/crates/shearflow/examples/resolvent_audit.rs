//! Audit the resolvent estimates over a lambda sweep: for each estimate
//! term, the supremum over lambda of LHS/RHS.
//!
//! Run with: cargo run --release --example resolvent_audit

use num_complex::Complex64;
use shearflow::base_flow::validate_profile;
use shearflow::grid::build_grid;
use shearflow::resolvent::estimate_audit;
use std::f64::consts::PI;

fn main() {
    let g = build_grid(129).unwrap();
    let u = g.nodes.mapv(|y| y + 0.1 * y * y);
    let profile = validate_profile(&g, &u, false).unwrap();
    let forcing = g.nodes.mapv(|y| Complex64::new((PI * y).sin(), 0.0));
    for nu in [1e-3, 1e-4] {
        let audit = estimate_audit(&g, &profile, nu, 1, &forcing).unwrap();
        println!(
            "nu = {nu:.0e}, k = 1 ({} lambda points, {} failed):",
            audit.evaluated_points, audit.failed_points
        );
        println!(
            "  {:<12} {:>12} {:>12} {:>10} {:>10}",
            "estimate", "lhs", "rhs", "ratio", "lambda*"
        );
        for r in &audit.rows {
            println!(
                "  {:<12} {:>12.4e} {:>12.4e} {:>10.4} {:>10.4}",
                r.estimate_id, r.lhs, r.rhs, r.ratio, r.lambda_at_sup
            );
        }
    }
}
