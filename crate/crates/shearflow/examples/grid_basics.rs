//! Channel grid fundamentals: nodes, spectral differentiation, quadrature,
//! Helmholtz solves, and the wavenumber-dependent norms.
//!
//! Run with: cargo run --release --example grid_basics

use ndarray::Array1;
use num_complex::Complex64;
use shearflow::grid::{build_grid, helmholtz_solve, norm, NormKind};
use std::f64::consts::PI;

fn main() {
    let g = build_grid(64).unwrap();
    println!("grid: {} Chebyshev-Gauss-Lobatto nodes on [0, 1]", g.n);
    println!(
        "  first interior node y_1 = {:.3e}, center spacing ~ {:.3e}",
        g.nodes[1],
        g.nodes[g.n / 2 + 1] - g.nodes[g.n / 2]
    );

    // spectral differentiation of y^3
    let f = g.nodes.mapv(|y| y * y * y);
    let df = g.apply_d1_real(&f);
    let err = (0..g.n).fold(0.0f64, |a, i| {
        a.max((df[i] - 3.0 * g.nodes[i] * g.nodes[i]).abs())
    });
    println!("max |D1 y^3 - 3y^2| = {err:.3e}");

    // quadrature
    let q = g.integrate(&g.nodes.mapv(|y| y.powi(7)));
    println!("int_0^1 y^7 dy = {q:.15} (exact 0.125)");

    // Dirichlet Helmholtz solve with a manufactured solution
    let k = 2;
    let rhs = g
        .nodes
        .mapv(|y| Complex64::new(-(4.0 * PI * PI + 4.0) * (2.0 * PI * y).sin(), 0.0));
    let psi = helmholtz_solve(&g, k, &rhs).unwrap();
    let herr = (0..g.n).fold(0.0f64, |a, i| {
        a.max((psi[i] - Complex64::new((2.0 * PI * g.nodes[i]).sin(), 0.0)).norm())
    });
    println!("helmholtz manufactured-solution error = {herr:.3e}");

    // norms of sin(pi y)
    let s = g.nodes.mapv(|y| Complex64::new((PI * y).sin(), 0.0));
    println!(
        "||sin(pi y)||_L2 = {:.12} (exact {:.12})",
        norm(&g, NormKind::L2, &s).unwrap(),
        1.0 / 2.0f64.sqrt()
    );
    println!(
        "||sin(pi y)||_H1k (k=1) = {:.12} (exact {:.12})",
        norm(&g, NormKind::H1k { k: 1 }, &s).unwrap(),
        (PI * PI / 2.0 + 0.5).sqrt()
    );
    println!(
        "||sin(pi y)||_H1k-dual (k=1) = {:.12}",
        norm(&g, NormKind::H1kDual { k: 1 }, &s).unwrap()
    );

    // duality sandwich |<f, g>| <= ||f||_dual ||g||_H1k on a rough pair
    let f_rough: Array1<Complex64> = Array1::from_iter(
        (0..g.n).map(|i| Complex64::new((i * 37 % 11) as f64 - 5.0, (i % 3) as f64 - 1.0)),
    );
    let mut g_rough: Array1<Complex64> = Array1::from_iter(
        (0..g.n).map(|i| Complex64::new((i * 13 % 7) as f64 - 3.0, (i % 5) as f64 - 2.0)),
    );
    g_rough[0] = Complex64::ZERO;
    g_rough[g.n - 1] = Complex64::ZERO;
    let pairing = g.inner(&f_rough, &g_rough).norm();
    let bound = norm(&g, NormKind::H1kDual { k: 3 }, &f_rough).unwrap()
        * norm(&g, NormKind::H1k { k: 3 }, &g_rough).unwrap();
    println!("duality sandwich: |<f,g>| = {pairing:.6e} <= {bound:.6e}");
}
