//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them all).

use ndarray::Array1;
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use shearflow::base_flow::{sine_perturbed, validate_profile, ShearProfile};
use shearflow::experiment::{
    decay_rate_point, fit_exponent, heat_lipschitz_sweep, sinh_window_norms,
    weighted_gradient_trials,
};
use shearflow::grid::{build_grid, ChannelGrid};
use shearflow::nonlinear::{evolve_perturbation, threshold_point, PerturbationField};
use shearflow::resolvent::{
    assemble_clamped, estimate_audit, rho_integral_check, solve_clamped_monolithic,
    ResolventProblem,
};
use shearflow::semigroup::{
    evolve_and_measure, BaseTrajectory, ForcingSlots, ModeState, StepOptions,
};
use shearflow::{base_flow, EPSILON_0};

fn report(criterion: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("ACCEPTANCE {criterion}: PASS ({detail})"),
        Err(detail) => {
            println!("ACCEPTANCE {criterion}: FAIL ({detail})");
            panic!("{criterion} failed: {detail}");
        }
    }
}

fn quad_profile(grid: &ChannelGrid) -> ShearProfile {
    let u = grid.nodes.mapv(|y| y + 0.1 * y * y);
    validate_profile(grid, &u, false).unwrap()
}

#[test]
fn criterion_1_auxiliary_inequalities() {
    let outcome = (|| -> Result<String, String> {
        let grid = build_grid(129).map_err(|e| e.to_string())?;

        let rows = sinh_window_norms(&grid, &[1, 2, 4, 8, 16, 32]);
        let fitted_c = rows.iter().fold(0.0f64, |a, r| a.max(r.scaled));
        if fitted_c > 2.0 {
            return Err(format!("sinh-window fitted constant {fitted_c} > 2"));
        }

        let worst = weighted_gradient_trials(&grid, 200, 1).map_err(|e| e.to_string())?;
        if worst > 1.0 + 1e-6 {
            return Err(format!("weighted-gradient worst ratio {worst} > 1 + 1e-6"));
        }

        let profile = sine_perturbed(&grid, 0.05);
        let a3 = heat_lipschitz_sweep(&grid, &profile, &[1e-3, 1e-4]).map_err(|e| e.to_string())?;
        let mut worst_frac = 0.0f64;
        for r in &a3 {
            let frac = r.ratio / r.limit_at_s.max(1e-300);
            worst_frac = worst_frac.max(frac);
            if frac > 3.0 {
                return Err(format!(
                    "heat Lipschitz ratio {} at (nu={}, s={}, t={}) exceeds 3x limit {}",
                    r.ratio, r.nu, r.s, r.t, r.limit_at_s
                ));
            }
        }
        Ok(format!(
            "sinh-window C = {fitted_c:.3}, gradient max ratio = {worst:.9}, Lipschitz worst ratio/limit = {worst_frac:.3}"
        ))
    })();
    report("1 auxiliary-inequalities", outcome);
}

#[test]
fn criterion_2_decomposition_exactness() {
    let outcome = (|| -> Result<String, String> {
        let grid = build_grid(129).map_err(|e| e.to_string())?;
        let profile = quad_profile(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut worst_rel = 0.0f64;
        let mut worst_bc = 0.0f64;
        for trial in 0..50 {
            let nu = 10.0f64.powf(-2.0 - 3.0 * rng.random::<f64>()); // 1e-2..1e-5
            let k = [1, 2, 4, 8][trial % 4];
            let lambda = -0.1 + 1.4 * rng.random::<f64>();
            let forcing: Array1<Complex64> = grid.nodes.mapv(|y| {
                Complex64::new(
                    (PI * y).sin() + (rng.random::<f64>() - 0.5) * (2.0 * PI * y).sin(),
                    (rng.random::<f64>() - 0.5) * (3.0 * PI * y).sin(),
                )
            });
            let problem = ResolventProblem::new(&grid, nu, k, lambda, &profile, forcing)
                .map_err(|e| e.to_string())?;
            let sol = assemble_clamped(&grid, &problem).map_err(|e| e.to_string())?;
            let (wm, _) = solve_clamped_monolithic(&grid, &problem).map_err(|e| e.to_string())?;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..grid.n {
                num += grid.quad_weights[i] * (sol.w_total[i] - wm[i]).norm_sqr();
                den += grid.quad_weights[i] * wm[i].norm_sqr();
            }
            let rel = (num / den.max(1e-300)).sqrt();
            worst_rel = worst_rel.max(rel);
            if rel >= 1e-6 {
                return Err(format!(
                    "trial {trial} (nu={nu:.2e}, k={k}, lambda={lambda:.3}): defect {rel:.2e}"
                ));
            }
            let d0: Complex64 = (0..grid.n)
                .map(|j| grid.d1[[0, j]] * sol.phi_total[j])
                .sum();
            let d1: Complex64 = (0..grid.n)
                .map(|j| grid.d1[[grid.n - 1, j]] * sol.phi_total[j])
                .sum();
            let bc = sol.phi_total[0]
                .norm()
                .max(sol.phi_total[grid.n - 1].norm())
                .max(d0.norm())
                .max(d1.norm());
            worst_bc = worst_bc.max(bc);
            if bc >= 1e-7 {
                return Err(format!("trial {trial}: clamped boundary value {bc:.2e}"));
            }
        }
        Ok(format!(
            "50 draws, worst relative defect {worst_rel:.2e}, worst boundary value {worst_bc:.2e}"
        ))
    })();
    report("2 decomposition-exactness", outcome);
}

#[test]
fn criterion_3_rho_integral_identity() {
    let outcome = (|| -> Result<String, String> {
        let mut ratios = Vec::new();
        for nu in [1e-3, 1e-4, 1e-5, 1e-6] {
            for k in [1, 2, 4, 8] {
                let c = rho_integral_check(nu, k).map_err(|e| e.to_string())?;
                ratios.push(c.ratio);
                ratios.push(c.ratio_ramp);
            }
        }
        let mn = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let spread = mx / mn - 1.0;
        if spread > 0.01 {
            return Err(format!("ratio spread {spread:.4} exceeds 1%"));
        }
        Ok(format!(
            "ratio = {:.6} .. {:.6} (spread {:.2e}), analytic 16 pi/(3 sqrt 3) = {:.6}",
            mn,
            mx,
            spread,
            16.0 * PI / (3.0 * 3.0f64.sqrt())
        ))
    })();
    report("3 rho-integral-identity", outcome);
}

#[test]
fn criterion_4_resolvent_scaling() {
    let outcome = (|| -> Result<String, String> {
        let grid = build_grid(129).map_err(|e| e.to_string())?;
        let profile = quad_profile(&grid);
        let forcing: Array1<Complex64> = grid.nodes.mapv(|y| Complex64::new((PI * y).sin(), 0.0));
        // sup over lambda (and over F) of ||w_Na||/||F||: the operator-norm
        // row of the audit, with the nu^{1/3} k^{2/3} prefactor removed.
        let sup_w = |nu: f64, k: i32| -> Result<f64, String> {
            let audit =
                estimate_audit(&grid, &profile, nu, k, &forcing).map_err(|e| e.to_string())?;
            let row = audit
                .rows
                .iter()
                .find(|r| r.estimate_id == "wL2.opnorm")
                .ok_or("missing wL2.opnorm row")?;
            let kf = k.unsigned_abs() as f64;
            Ok(row.ratio / (nu.powf(1.0 / 3.0) * kf.powf(2.0 / 3.0)))
        };
        // nu sweep at k = 1
        let nus = [1e-3, 10f64.powf(-3.5), 1e-4, 10f64.powf(-4.5)];
        let mut pts = Vec::new();
        for &nu in &nus {
            pts.push((nu, sup_w(nu, 1)?));
        }
        let (nu_slope, _, nu_ci) = fit_exponent(&pts).map_err(|e| e.to_string())?;
        if !(-0.38..=0.0).contains(&nu_slope) {
            return Err(format!("nu exponent {nu_slope:.4} outside [-0.38, 0]"));
        }
        // k sweep at nu = 1e-4
        let mut kpts = Vec::new();
        for &k in &[1, 2, 4, 8] {
            kpts.push((k as f64, sup_w(1e-4, k)?));
        }
        let (k_slope, _, k_ci) = fit_exponent(&kpts).map_err(|e| e.to_string())?;
        if !(-0.72..=0.0).contains(&k_slope) {
            return Err(format!("k exponent {k_slope:.4} outside [-0.72, 0]"));
        }
        Ok(format!(
            "nu exponent {nu_slope:.4} +/- {nu_ci:.4}, k exponent {k_slope:.4} +/- {k_ci:.4}"
        ))
    })();
    report("4 resolvent-scaling", outcome);
}

type SweepData = (Vec<(f64, f64)>, Vec<f64>);

fn dissipation_sweep(profile_sine: bool) -> Result<SweepData, String> {
    let grid = build_grid(129).map_err(|e| e.to_string())?;
    let profile = if profile_sine {
        sine_perturbed(&grid, 0.05)
    } else {
        base_flow::couette(&grid)
    };
    let nus = [1e-3, 10f64.powf(-3.5), 1e-4, 10f64.powf(-4.5), 1e-5];
    let mut gamma_pts = Vec::new();
    let mut dampings = Vec::new();
    for &nu in &nus {
        let p = decay_rate_point(&grid, &profile, nu, 1).map_err(|e| e.to_string())?;
        gamma_pts.push((nu, p.gamma));
        dampings.push(p.u_damping);
    }
    Ok((gamma_pts, dampings))
}

#[test]
fn criterion_5_enhanced_dissipation() {
    let outcome = (|| -> Result<String, String> {
        let mut details = Vec::new();
        for (name, sine) in [("couette", false), ("sine", true)] {
            let (pts, _) = dissipation_sweep(sine)?;
            let (slope, _, ci) = fit_exponent(&pts).map_err(|e| e.to_string())?;
            if !(0.28..=0.38).contains(&slope) {
                return Err(format!(
                    "{name}: gamma exponent {slope:.4} outside [0.28, 0.38]"
                ));
            }
            let scaled: Vec<f64> = pts.iter().map(|&(nu, g)| g / nu.powf(1.0 / 3.0)).collect();
            let mn = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
            let mx = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if mx / mn > 5.0 {
                return Err(format!(
                    "{name}: gamma/nu^(1/3) band {:.3}..{:.3} wider than factor 5",
                    mn, mx
                ));
            }
            details.push(format!(
                "{name}: exponent {slope:.4} +/- {ci:.4}, gamma/nu^(1/3) in [{mn:.3}, {mx:.3}]"
            ));
        }
        Ok(details.join("; "))
    })();
    report("5 enhanced-dissipation", outcome);
}

#[test]
fn criterion_6_inviscid_damping_uniformity() {
    let outcome = (|| -> Result<String, String> {
        let mut details = Vec::new();
        for (name, sine) in [("couette", false), ("sine", true)] {
            let (_, dampings) = dissipation_sweep(sine)?;
            let mn = dampings.iter().cloned().fold(f64::INFINITY, f64::min);
            let mx = dampings.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if mx / mn > 2.0 {
                return Err(format!(
                    "{name}: |k| ||e u||_L2L2 / ||omega_in|| varies {:.3}..{:.3} (> factor 2)",
                    mn, mx
                ));
            }
            details.push(format!("{name}: damping ratio in [{mn:.4}, {mx:.4}]"));
        }
        Ok(details.join("; "))
    })();
    report("6 inviscid-damping-uniformity", outcome);
}

#[test]
fn criterion_7_frozen_time_slabs() {
    let outcome = (|| -> Result<String, String> {
        let grid = build_grid(129).map_err(|e| e.to_string())?;
        let profile = sine_perturbed(&grid, 0.05);
        let theta_in = grid.nodes.mapv(|y| Complex64::new((PI * y).sin(), 0.0));
        let mut ratios = Vec::new();
        for nu in [1e-3f64, 1e-4] {
            // forcing amplitudes at the natural scaling of the estimate's
            // right side, so every term stays O(1) across the sweep
            let a1 = 0.1 * nu.powf(1.0 / 3.0);
            let a2 = 0.05 * nu.powf(2.0 / 3.0);
            let g1 = grid
                .nodes
                .mapv(|y| Complex64::new(a1 * (PI * y).sin(), 0.0));
            let g2 = grid
                .nodes
                .mapv(|y| Complex64::new(a2 * (2.0 * PI * y).sin(), 0.0));
            let d = shearflow::semigroup::frozen_time_decompose(
                &grid,
                &theta_in,
                &profile,
                Some(g1),
                Some(g2),
                nu,
                1,
                6,
            )
            .map_err(|e| e.to_string())?;
            if d.recon_error >= 1e-6 {
                return Err(format!(
                    "nu={nu:.0e}: reconstruction error {:.2e} >= 1e-6",
                    d.recon_error
                ));
            }
            ratios.push(d.ratio);
        }
        let mn = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if mx / mn > 3.0 {
            return Err(format!(
                "weighted slab sum ratio varies {mn:.3e}..{mx:.3e} (> factor 3)"
            ));
        }
        Ok(format!(
            "reconstruction exact, slab ratio in [{mn:.3e}, {mx:.3e}]"
        ))
    })();
    report("7 frozen-time-slabs", outcome);
}

#[test]
fn criterion_8_nonlinear_threshold_consistency() {
    let outcome = (|| -> Result<String, String> {
        let grid = build_grid(129).map_err(|e| e.to_string())?;
        let profile = base_flow::couette(&grid);
        let points: Vec<(usize, f64)> = [1e-3, 3e-4, 1e-4].into_iter().enumerate().collect();
        let reports: Vec<Result<shearflow::nonlinear::ThresholdReport, String>> = {
            use rayon::prelude::*;
            points
                .par_iter()
                .map(|&(idx, nu)| {
                    threshold_point(&grid, &profile, nu, 0.1, 0.1, 8, 1000 + idx as u64, None)
                        .map_err(|e| e.to_string())
                })
                .collect()
        };
        let mut ratio_e = Vec::new();
        let mut ratio_g = Vec::new();
        for ((_, nu), rep) in points.iter().zip(reports) {
            let rep = rep?;
            if !rep.stayed_stable {
                return Err(format!(
                    "nu={nu:.0e}: run not stable (blowup={}, sum_E={:.3e}, linear={:.3e})",
                    rep.blowup, rep.sum_e, rep.sum_e_linear
                ));
            }
            ratio_e.push(rep.ratio_e);
            ratio_g.push(rep.ratio_g);
        }
        let band = |v: &[f64]| {
            let mn = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (mn, mx, mx / mn)
        };
        let (emn, emx, espread) = band(&ratio_e);
        if espread > 3.0 {
            return Err(format!(
                "sum_E/nu^(1/2) band [{emn:.3e}, {emx:.3e}] wider than factor 3"
            ));
        }
        let (gmn, gmx, gspread) = band(&ratio_g);
        if gspread > 3.0 {
            return Err(format!(
                "sum_G/nu^(5/6) band [{gmn:.3e}, {gmx:.3e}] wider than factor 3"
            ));
        }
        Ok(format!(
            "all stable; sum_E/nu^(1/2) in [{emn:.3e}, {emx:.3e}], sum_G/nu^(5/6) in [{gmn:.3e}, {gmx:.3e}]"
        ))
    })();
    report("8 nonlinear-threshold-consistency", outcome);
}

#[test]
fn criterion_9_linearization_oracle() {
    let outcome = (|| -> Result<String, String> {
        let grid = build_grid(129).map_err(|e| e.to_string())?;
        let profile = base_flow::couette(&grid);
        let nu = 1e-3f64;
        let t_end = nu.powf(-1.0 / 3.0);
        let dt = 0.05;
        let amp = 1e-8;
        let psi = grid
            .nodes
            .mapv(|y| Complex64::new(amp * (PI * y).sin().powi(2), 0.0));
        let th = grid
            .nodes
            .mapv(|y| Complex64::new(0.0, amp * (PI * y).sin()));
        let mut field = PerturbationField::zero(&grid, 1);
        field.modes[0] = ModeState::from_stream_function(&grid, 1, psi.clone(), th.clone())
            .map_err(|e| e.to_string())?;
        let run = evolve_perturbation(&grid, &field, &profile, nu, t_end, Some(dt), true)
            .map_err(|e| e.to_string())?;
        let nl = run.final_field.ok_or("nonlinear run blew up")?;

        let s0 = ModeState::from_stream_function(&grid, 1, psi, th).map_err(|e| e.to_string())?;
        let lin = evolve_and_measure(
            &grid,
            &s0,
            BaseTrajectory::HeatEvolving(&profile),
            &ForcingSlots::none(),
            nu,
            t_end,
            0.0,
            StepOptions {
                couple_buoyancy: true,
            },
            Some(dt),
        )
        .map_err(|e| e.to_string())?
        .final_state;
        let scale_w = grid.l2_norm(&lin.omega).max(1e-300);
        let scale_t = grid.l2_norm(&lin.theta).max(1e-300);
        let mut err_w = 0.0f64;
        let mut err_t = 0.0f64;
        for i in 0..grid.n {
            err_w = err_w.max((nl.modes[0].omega[i] - lin.omega[i]).norm());
            err_t = err_t.max((nl.modes[0].theta[i] - lin.theta[i]).norm());
        }
        let rel = (err_w / scale_w).max(err_t / scale_t);
        if rel >= 1e-4 {
            return Err(format!("linearization defect {rel:.2e} >= 1e-4"));
        }
        Ok(format!(
            "relative defect {rel:.2e} over one enhanced-dissipation time"
        ))
    })();
    report("9 linearization-oracle", outcome);
}

#[test]
fn epsilon_constants_are_pinned() {
    // The weight rate and ledger rate used throughout the acceptance runs.
    assert_eq!(EPSILON_0, 0.01);
    assert_eq!(shearflow::EPSILON_LEDGER, 0.0025);
}
