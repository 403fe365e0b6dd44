//! Cross-check of the nonlinear solver against the linearized evolution:
//! a single mode at tiny amplitude must follow the linear semigroup.
//!
//! Run with: cargo run --release --example linearization_check

use ndarray::Array1;
use num_complex::Complex64;
use shearflow::base_flow::couette;
use shearflow::grid::build_grid;
use shearflow::nonlinear::{evolve_perturbation, PerturbationField};
use shearflow::semigroup::{
    evolve_and_measure, BaseTrajectory, ForcingSlots, ModeState, StepOptions,
};
use std::f64::consts::PI;

fn main() {
    let g = build_grid(97).unwrap();
    let p = couette(&g);
    let nu = 1e-3f64;
    let t_end = nu.powf(-1.0 / 3.0);
    let dt = 0.05;

    for amp in [1e-2, 1e-4, 1e-8] {
        let psi = g
            .nodes
            .mapv(|y| Complex64::new(amp * (PI * y).sin().powi(2), 0.0));
        let th = g.nodes.mapv(|y| Complex64::new(0.0, amp * (PI * y).sin()));
        let mut field = PerturbationField::zero(&g, 1);
        field.modes[0] = ModeState::from_stream_function(&g, 1, psi.clone(), th.clone()).unwrap();
        let nl = evolve_perturbation(&g, &field, &p, nu, t_end, Some(dt), true)
            .unwrap()
            .final_field
            .unwrap();

        let s0 = ModeState::from_stream_function(&g, 1, psi, th).unwrap();
        let lin = evolve_and_measure(
            &g,
            &s0,
            BaseTrajectory::HeatEvolving(&p),
            &ForcingSlots::none(),
            nu,
            t_end,
            0.0,
            StepOptions {
                couple_buoyancy: true,
            },
            Some(dt),
        )
        .unwrap()
        .final_state;

        let scale = g.l2_norm(&lin.omega);
        let diff: Array1<Complex64> =
            Array1::from_iter((0..g.n).map(|i| nl.modes[0].omega[i] - lin.omega[i]));
        println!(
            "amplitude {amp:.0e}: relative deviation from linear evolution = {:.3e}",
            g.l2_norm(&diff) / scale
        );
    }
    println!("(the deviation scales with the amplitude: quadratic self-interaction)");
}
