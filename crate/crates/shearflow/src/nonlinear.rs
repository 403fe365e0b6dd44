//! Pseudo-spectral solver for the full perturbation system in
//! vorticity-temperature form on T x [0, 1]: modes k = 0..K with the
//! negative wavenumbers supplied by conjugation, direct O(K^2) convolutions
//! (exact dealiasing by construction), the weighted stability functionals
//! E_k / G_k, and transition-threshold amplitude sweeps.

use ndarray::Array1;
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::base_flow::{HeatStepper, ShearProfile};
use crate::error::{Error, Result};
use crate::grid::ChannelGrid;
use crate::semigroup::{BaseMid, ModeState, ModeStepper, ScalarCn, MIDPOINT_SWEEPS};
use crate::EPSILON_0;

/// All retained Fourier modes of the perturbation at one time. Modes are
/// stored for k = 1..=k_max; omega_{-k} = conj(omega_k) is implicit, so the
/// reality constraint holds structurally. Zero modes are real fields.
#[derive(Debug, Clone)]
pub struct PerturbationField {
    pub k_max: usize,
    pub t: f64,
    /// modes[i] holds wavenumber k = i + 1.
    pub modes: Vec<ModeState>,
    /// Horizontal mean velocity u^(1)_0 (vanishes at the walls).
    pub u1_zero: Array1<f64>,
    /// Mean temperature theta_0 (vanishes at the walls).
    pub theta_zero: Array1<f64>,
}

impl PerturbationField {
    pub fn zero(grid: &ChannelGrid, k_max: usize) -> Self {
        let zc = Array1::from_elem(grid.n, Complex64::ZERO);
        let zr = Array1::zeros(grid.n);
        let modes = (1..=k_max)
            .map(|k| ModeState {
                k: k as i32,
                t: 0.0,
                omega: zc.clone(),
                theta: zc.clone(),
                psi: zc.clone(),
            })
            .collect();
        Self {
            k_max,
            t: 0.0,
            modes,
            u1_zero: zr.clone(),
            theta_zero: zr,
        }
    }

    /// Sum of the mode L2 norms (omega and theta), used for blowup checks.
    pub fn total_norm(&self, grid: &ChannelGrid) -> f64 {
        let mut s = grid.integrate(&self.u1_zero.mapv(|v| v * v)).sqrt()
            + grid.integrate(&self.theta_zero.mapv(|v| v * v)).sqrt();
        for m in &self.modes {
            s += grid.l2_norm(&m.omega) + grid.l2_norm(&m.theta);
        }
        s
    }

    /// Pointwise bound max_y (|u_0| + 2 sum_k |u_k|) on the perturbation
    /// velocity magnitude.
    pub fn velocity_bound(&self, grid: &ChannelGrid) -> f64 {
        let mut bound = vec![0.0f64; grid.n];
        for (i, b) in bound.iter_mut().enumerate() {
            *b += self.u1_zero[i].abs();
        }
        for m in &self.modes {
            let (u1, u2) = m.velocity(grid);
            for (i, b) in bound.iter_mut().enumerate() {
                *b += 2.0 * (u1[i].norm_sqr() + u2[i].norm_sqr()).sqrt();
            }
        }
        bound.iter().fold(0.0f64, |a, &v| a.max(v))
    }
}

/// Mode velocities snapshot used by the convolutions: index 0 holds the
/// zero mode, index k the positive mode k.
struct ModeSnapshot {
    u1: Vec<Array1<Complex64>>,
    u2: Vec<Array1<Complex64>>,
    du1: Vec<Array1<Complex64>>,
    theta: Vec<Array1<Complex64>>,
}

impl ModeSnapshot {
    fn build(
        grid: &ChannelGrid,
        k_max: usize,
        psi: &[Array1<Complex64>],
        theta: &[Array1<Complex64>],
        u1_zero: &Array1<f64>,
        theta_zero: &Array1<f64>,
    ) -> Self {
        let n = grid.n;
        let mut u1 = Vec::with_capacity(k_max + 1);
        let mut u2 = Vec::with_capacity(k_max + 1);
        let mut du1 = Vec::with_capacity(k_max + 1);
        let mut th = Vec::with_capacity(k_max + 1);
        u1.push(u1_zero.mapv(|v| Complex64::new(v, 0.0)));
        u2.push(Array1::from_elem(n, Complex64::ZERO));
        du1.push(grid.apply_d1(&u1[0]));
        th.push(theta_zero.mapv(|v| Complex64::new(v, 0.0)));
        for k in 1..=k_max {
            let ik = Complex64::new(0.0, k as f64);
            let p = &psi[k - 1];
            u1.push(grid.apply_d1(p));
            u2.push(p.mapv(|v| -ik * v));
            // d_y u1 = d_y^2 psi
            du1.push(grid.apply_d2(p));
            th.push(theta[k - 1].clone());
        }
        Self {
            u1,
            u2,
            du1,
            theta: th,
        }
    }

    fn get(&self, field: &[Array1<Complex64>], l: i32, i: usize) -> Complex64 {
        if l >= 0 {
            field[l as usize][i]
        } else {
            field[(-l) as usize][i].conj()
        }
    }

    fn u1_at(&self, l: i32, i: usize) -> Complex64 {
        self.get(&self.u1, l, i)
    }
    fn u2_at(&self, l: i32, i: usize) -> Complex64 {
        self.get(&self.u2, l, i)
    }
    fn du1_at(&self, l: i32, i: usize) -> Complex64 {
        self.get(&self.du1, l, i)
    }
    fn du2_at(&self, l: i32, i: usize) -> Complex64 {
        // divergence-free: d_y u2_l = -i l u1_l
        let il = Complex64::new(0.0, l as f64);
        -il * self.u1_at(l, i)
    }
    fn theta_at(&self, l: i32, i: usize) -> Complex64 {
        self.get(&self.theta, l, i)
    }
}

/// Convolution sources of mode k (k = 0..=K kept; |l|, |k-l| <= K):
/// f11 = (u1 d_x u1)_k, f12 = (u1 d_x u2)_k, f21 = (u2 d_y u1)_k,
/// f22 = (u2 d_y u2)_k, g1 = (u1 theta)_k, g2 = (u2 theta)_k.
struct Convolutions {
    f11: Array1<Complex64>,
    f12: Array1<Complex64>,
    f21: Array1<Complex64>,
    f22: Array1<Complex64>,
    g1: Array1<Complex64>,
    g2: Array1<Complex64>,
}

fn convolve_mode(grid: &ChannelGrid, snap: &ModeSnapshot, k_max: i32, k: i32) -> Convolutions {
    let n = grid.n;
    let mut f11 = Array1::from_elem(n, Complex64::ZERO);
    let mut f12 = Array1::from_elem(n, Complex64::ZERO);
    let mut f21 = Array1::from_elem(n, Complex64::ZERO);
    let mut f22 = Array1::from_elem(n, Complex64::ZERO);
    let mut g1 = Array1::from_elem(n, Complex64::ZERO);
    let mut g2 = Array1::from_elem(n, Complex64::ZERO);
    let lo = (-k_max).max(k - k_max);
    let hi = k_max.min(k + k_max);
    for l in lo..=hi {
        let m = k - l;
        let dx = Complex64::new(0.0, m as f64); // d_x on mode (k - l)
        for i in 0..n {
            let u1l = snap.u1_at(l, i);
            let u2l = snap.u2_at(l, i);
            f11[i] += u1l * dx * snap.u1_at(m, i);
            f12[i] += u1l * dx * snap.u2_at(m, i);
            f21[i] += u2l * snap.du1_at(m, i);
            f22[i] += u2l * snap.du2_at(m, i);
            g1[i] += snap.u1_at(m, i) * snap.theta_at(l, i);
            g2[i] += snap.u2_at(m, i) * snap.theta_at(l, i);
        }
    }
    Convolutions {
        f11,
        f12,
        f21,
        f22,
        g1,
        g2,
    }
}

/// Prefactored kernels for one (grid, nu, dt, K) nonlinear configuration.
pub struct NonlinearStepper {
    pub nu: f64,
    pub dt: f64,
    pub k_max: usize,
    steppers: Vec<ModeStepper>,
    scalar: ScalarCn,
}

impl NonlinearStepper {
    pub fn new(grid: &ChannelGrid, nu: f64, k_max: usize, dt: f64) -> Result<Self> {
        let steppers = (1..=k_max)
            .map(|k| ModeStepper::new(grid, nu, k as i32, dt))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            nu,
            dt,
            k_max,
            steppers,
            scalar: ScalarCn::new(grid, nu, dt),
        })
    }
}

/// Advance the full perturbation field one step, with the base flow frozen
/// at the step midpoint. The linear part of each mode goes through the same
/// kernel as the linearized evolution; the convolution sources and the
/// buoyancy coupling -ik theta are evaluated at the midpoint inside the
/// shared fixed-point sweeps.
pub fn nonlinear_step(
    grid: &ChannelGrid,
    stepper: &NonlinearStepper,
    field: &PerturbationField,
    base_mid: &BaseMid,
    initial_total_norm: f64,
) -> Result<PerturbationField> {
    let n = grid.n;
    let k_max = stepper.k_max;
    let dt = stepper.dt;
    let cfl = (k_max as f64) * dt * (base_mid.max_abs + field.velocity_bound(grid));
    if cfl > 0.5 {
        return Err(Error::CflViolation(cfl));
    }

    let mut cur = field.clone();
    for _ in 0..MIDPOINT_SWEEPS {
        // midpoint snapshot of every mode
        let psi_mid: Vec<Array1<Complex64>> = (0..k_max)
            .map(|i| {
                Array1::from_iter(
                    (0..n).map(|j| 0.5 * (field.modes[i].psi[j] + cur.modes[i].psi[j])),
                )
            })
            .collect();
        let theta_mid: Vec<Array1<Complex64>> = (0..k_max)
            .map(|i| {
                Array1::from_iter(
                    (0..n).map(|j| 0.5 * (field.modes[i].theta[j] + cur.modes[i].theta[j])),
                )
            })
            .collect();
        let omega_mid: Vec<Array1<Complex64>> = (0..k_max)
            .map(|i| {
                Array1::from_iter(
                    (0..n).map(|j| 0.5 * (field.modes[i].omega[j] + cur.modes[i].omega[j])),
                )
            })
            .collect();
        let u1z_mid = Array1::from_iter((0..n).map(|j| 0.5 * (field.u1_zero[j] + cur.u1_zero[j])));
        let thz_mid =
            Array1::from_iter((0..n).map(|j| 0.5 * (field.theta_zero[j] + cur.theta_zero[j])));
        let snap = ModeSnapshot::build(grid, k_max, &psi_mid, &theta_mid, &u1z_mid, &thz_mid);

        // nonzero modes
        let mut next = cur.clone();
        for (idx, ms) in stepper.steppers.iter().enumerate() {
            let k = (idx + 1) as i32;
            let ik = Complex64::new(0.0, k as f64);
            let conv = convolve_mode(grid, &snap, k_max as i32, k);
            let dsum = {
                let s = Array1::from_iter((0..n).map(|i| conv.f11[i] + conv.f21[i]));
                grid.apply_d1(&s)
            };
            let dg2 = grid.apply_d1(&conv.g2);
            let mut e_w = Array1::from_elem(n, Complex64::ZERO);
            let mut e_t = Array1::from_elem(n, Complex64::ZERO);
            for i in 0..n {
                // linear terms at the midpoint
                e_w[i] = -ik * base_mid.values[i] * omega_mid[idx][i]
                    + ik * base_mid.dy2[i] * psi_mid[idx][i]
                    - ik * theta_mid[idx][i];
                e_t[i] = -ik * base_mid.values[i] * theta_mid[idx][i];
                // transport in divergence form
                e_w[i] += -dsum[i] + ik * (conv.f12[i] + conv.f22[i]);
                e_t[i] += -ik * conv.g1[i] - dg2[i];
            }
            let (w, t, p) = ms.advance(
                grid,
                &field.modes[idx].omega,
                &field.modes[idx].theta,
                &e_w,
                &e_t,
            );
            next.modes[idx].omega = w;
            next.modes[idx].theta = t;
            next.modes[idx].psi = p;
            next.modes[idx].t = field.t + dt;
        }

        // zero modes: (d_t - nu d_y^2) u1_0 = -f0^{2,1},
        //             (d_t - nu d_y^2) theta_0 = -d_y (u2 theta)_0
        let mut f021 = Array1::<f64>::zeros(n);
        let mut g20 = Array1::from_elem(n, Complex64::ZERO);
        for l in 1..=k_max as i32 {
            for i in 0..n {
                // l and -l pairs are conjugate: sum is twice the real part
                let a = snap.u2_at(l, i) * snap.du1_at(-l, i);
                f021[i] += 2.0 * a.re;
                let b = snap.u2_at(l, i) * snap.theta_at(-l, i);
                g20[i] += 2.0 * b.re;
            }
        }
        let dg20 = grid.apply_d1(&g20);
        let src_u = f021.mapv(|v| -v);
        let src_t = Array1::from_iter((0..n).map(|i| -dg20[i].re));
        next.u1_zero = stepper.scalar.step(&field.u1_zero, &src_u);
        next.theta_zero = stepper.scalar.step(&field.theta_zero, &src_t);
        cur = next;
    }
    cur.t = field.t + dt;

    let total = cur.total_norm(grid);
    if total > 1e6 * initial_total_norm.max(1e-300) {
        return Err(Error::BlowupDetected {
            t: cur.t,
            norm: total,
        });
    }
    Ok(cur)
}

/// Default nonlinear step: CFL 0.25 against base flow plus perturbation,
/// and at least 50 samples per enhanced-dissipation time.
pub fn default_nonlinear_dt(nu: f64, k_max: usize, u_total: f64) -> f64 {
    let adv = 0.25 / ((k_max as f64) * u_total.max(1e-6));
    adv.min(nu.powf(-1.0 / 3.0) / 50.0)
}

/// Per-mode accumulators of the weighted space-time functionals.
pub struct FunctionalAccumulator {
    pub nu: f64,
    pub k_max: usize,
    dt_sample: f64,
    int_u_sq: Vec<f64>,
    int_omega_sq: Vec<f64>,
    int_theta_sq: Vec<f64>,
    sup_u_inf: Vec<f64>,
    sup_parab_omega: Vec<f64>,
    sup_theta: Vec<f64>,
    sup_omega0: f64,
    sup_theta0: f64,
    prev: Option<Vec<FunctionalSample>>,
}

#[derive(Clone, Copy)]
struct FunctionalSample {
    u_sq_w: f64,
    omega_sq_w: f64,
    theta_sq_w: f64,
}

impl FunctionalAccumulator {
    pub fn new(grid: &ChannelGrid, nu: f64, k_max: usize, dt_sample: f64) -> Self {
        assert!(
            dt_sample <= nu.powf(-1.0 / 3.0) / 50.0 + 1e-12,
            "functional sampling must resolve the enhanced-dissipation time"
        );
        let _ = grid;
        Self {
            nu,
            k_max,
            dt_sample,
            int_u_sq: vec![0.0; k_max + 1],
            int_omega_sq: vec![0.0; k_max + 1],
            int_theta_sq: vec![0.0; k_max + 1],
            sup_u_inf: vec![0.0; k_max + 1],
            sup_parab_omega: vec![0.0; k_max + 1],
            sup_theta: vec![0.0; k_max + 1],
            sup_omega0: 0.0,
            sup_theta0: 0.0,
            prev: None,
        }
    }

    /// Record the field at its current time (call once per step, including
    /// the initial state).
    pub fn record(&mut self, grid: &ChannelGrid, field: &PerturbationField) {
        let wfac = (EPSILON_0 * self.nu.powf(1.0 / 3.0) * field.t).exp();
        let omega0 = grid.apply_d1_real(&field.u1_zero);
        self.sup_omega0 = self
            .sup_omega0
            .max(grid.integrate(&omega0.mapv(|v| v * v)).sqrt());
        self.sup_theta0 = self
            .sup_theta0
            .max(grid.integrate(&field.theta_zero.mapv(|v| v * v)).sqrt());
        let mut samples = Vec::with_capacity(self.k_max + 1);
        samples.push(FunctionalSample {
            u_sq_w: 0.0,
            omega_sq_w: 0.0,
            theta_sq_w: 0.0,
        });
        for (idx, m) in field.modes.iter().enumerate() {
            let kk = idx + 1;
            let (u1, u2) = m.velocity(grid);
            let u_sq = grid.l2_norm(&u1).powi(2) + grid.l2_norm(&u2).powi(2);
            let omega_sq = grid.l2_norm(&m.omega).powi(2);
            let theta_sq = grid.l2_norm(&m.theta).powi(2);
            let u_inf = (0..grid.n)
                .map(|i| (u1[i].norm_sqr() + u2[i].norm_sqr()).sqrt())
                .fold(0.0f64, f64::max);
            let parab = (0..grid.n)
                .map(|i| {
                    let y = grid.nodes[i];
                    grid.quad_weights[i] * 4.0 * y * (1.0 - y) * m.omega[i].norm_sqr()
                })
                .sum::<f64>()
                .sqrt();
            self.sup_u_inf[kk] = self.sup_u_inf[kk].max(wfac * u_inf);
            self.sup_parab_omega[kk] = self.sup_parab_omega[kk].max(wfac * parab);
            self.sup_theta[kk] = self.sup_theta[kk].max(wfac * theta_sq.sqrt());
            samples.push(FunctionalSample {
                u_sq_w: wfac * wfac * u_sq,
                omega_sq_w: wfac * wfac * omega_sq,
                theta_sq_w: wfac * wfac * theta_sq,
            });
        }
        if let Some(prev) = &self.prev {
            for kk in 1..=self.k_max {
                self.int_u_sq[kk] += 0.5 * self.dt_sample * (prev[kk].u_sq_w + samples[kk].u_sq_w);
                self.int_omega_sq[kk] +=
                    0.5 * self.dt_sample * (prev[kk].omega_sq_w + samples[kk].omega_sq_w);
                self.int_theta_sq[kk] +=
                    0.5 * self.dt_sample * (prev[kk].theta_sq_w + samples[kk].theta_sq_w);
            }
        }
        self.prev = Some(samples);
    }
}

/// The E_k / G_k stability functionals. `e` carries the bootstrap form with
/// the |k|^{1/2} prefactor on the L-infinity term; `e_plain` the variant
/// with prefactor one. Sums run over all of Z via conjugate symmetry.
#[derive(Debug, Clone)]
pub struct StabilityFunctionals {
    pub e: Vec<f64>,
    pub e_plain: Vec<f64>,
    pub g: Vec<f64>,
    pub sum_e: f64,
    pub sum_e_plain: f64,
    pub sum_g: f64,
}

/// Finalize the accumulated functionals.
pub fn compute_functionals(acc: &FunctionalAccumulator) -> StabilityFunctionals {
    let nu = acc.nu;
    let kmax = acc.k_max;
    let mut e = vec![0.0; kmax + 1];
    let mut e_plain = vec![0.0; kmax + 1];
    let mut g = vec![0.0; kmax + 1];
    e[0] = acc.sup_omega0;
    e_plain[0] = acc.sup_omega0;
    g[0] = acc.sup_theta0;
    for kk in 1..=kmax {
        let kf = kk as f64;
        let base = kf * acc.int_u_sq[kk].sqrt()
            + acc.sup_parab_omega[kk]
            + nu.powf(0.25) * kf.sqrt() * acc.int_omega_sq[kk].sqrt();
        e[kk] = base + kf.sqrt() * acc.sup_u_inf[kk];
        e_plain[kk] = base + acc.sup_u_inf[kk];
        g[kk] = kf.powf(1.0 / 3.0) * acc.sup_theta[kk]
            + nu.powf(1.0 / 6.0) * kf.powf(2.0 / 3.0) * acc.int_theta_sq[kk].sqrt();
    }
    let sum = |v: &[f64]| v[0] + 2.0 * v[1..].iter().sum::<f64>();
    StabilityFunctionals {
        sum_e: sum(&e),
        sum_e_plain: sum(&e_plain),
        sum_g: sum(&g),
        e,
        e_plain,
        g,
    }
}

/// Evolve a perturbation field to t_end, accumulating functionals. With
/// `nonlinear` false the convolution sources are dropped, which is exactly
/// the per-mode linearized evolution (the linear prediction of a threshold
/// run).
pub struct NonlinearRun {
    pub functionals: StabilityFunctionals,
    pub final_field: Option<PerturbationField>,
    pub blowup: Option<(f64, f64)>,
    pub steps: usize,
}

pub fn evolve_perturbation(
    grid: &ChannelGrid,
    initial: &PerturbationField,
    base: &ShearProfile,
    nu: f64,
    t_end: f64,
    dt: Option<f64>,
    nonlinear: bool,
) -> Result<NonlinearRun> {
    let k_max = initial.k_max;
    let u_total = base.max_abs() + initial.velocity_bound(grid);
    let dt = dt.unwrap_or_else(|| default_nonlinear_dt(nu, k_max, u_total));
    let nsteps = (t_end / dt).ceil() as usize;
    let dt = t_end / nsteps as f64;
    let stepper = NonlinearStepper::new(grid, nu, k_max, dt)?;
    let heat = HeatStepper::new(grid, nu, dt);
    let initial_norm = initial.total_norm(grid);

    let mut acc = FunctionalAccumulator::new(grid, nu, k_max, dt);
    let mut field = initial.clone();
    acc.record(grid, &field);
    let mut u_now = base.values.clone();
    for step_idx in 0..nsteps {
        let u_next = heat.step(&u_now);
        let mid = Array1::from_iter((0..grid.n).map(|i| 0.5 * (u_now[i] + u_next[i])));
        let base_mid = BaseMid::from_values(grid, mid);
        u_now = u_next;
        let advanced = if nonlinear {
            nonlinear_step(grid, &stepper, &field, &base_mid, initial_norm)
        } else {
            linearized_step(grid, &stepper, &field, &base_mid)
        };
        match advanced {
            Ok(next) => {
                field = next;
                acc.record(grid, &field);
            }
            Err(Error::BlowupDetected { t, norm }) => {
                return Ok(NonlinearRun {
                    functionals: compute_functionals(&acc),
                    final_field: None,
                    blowup: Some((t, norm)),
                    steps: step_idx,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(NonlinearRun {
        functionals: compute_functionals(&acc),
        final_field: Some(field),
        blowup: None,
        steps: nsteps,
    })
}

/// Per-mode linearized step of the same field type (no convolutions,
/// buoyancy on); zero modes have no linear source and decay by diffusion.
fn linearized_step(
    grid: &ChannelGrid,
    stepper: &NonlinearStepper,
    field: &PerturbationField,
    base_mid: &BaseMid,
) -> Result<PerturbationField> {
    let n = grid.n;
    let mut next = field.clone();
    let zero = Array1::zeros(n);
    for (idx, ms) in stepper.steppers.iter().enumerate() {
        let state = &field.modes[idx];
        let new_state = crate::semigroup::step_with(
            grid,
            ms,
            state,
            base_mid,
            &Array1::from_elem(n, Complex64::ZERO),
            &Array1::from_elem(n, Complex64::ZERO),
            crate::semigroup::StepOptions {
                couple_buoyancy: true,
            },
        )?;
        next.modes[idx] = new_state;
    }
    next.u1_zero = stepper.scalar.step(&field.u1_zero, &zero);
    next.theta_zero = stepper.scalar.step(&field.theta_zero, &zero);
    next.t = field.t + stepper.dt;
    Ok(next)
}

/// Seeded random initial data: psi_k and theta_k are sin^2 / sin bubbles
/// with random complex phases and 1/(1+k^2) spectral decay, scaled so that
/// ||u_in||_{H^2} = c_u nu^{1/2} and ||<D_x> theta_in||_{L2} = c_th nu^{5/6}.
pub fn random_initial_field(
    grid: &ChannelGrid,
    k_max: usize,
    nu: f64,
    c_u: f64,
    c_theta: f64,
    seed: u64,
) -> Result<PerturbationField> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = PerturbationField::zero(grid, k_max);
    let bubble = grid.nodes.mapv(|y| (PI * y).sin().powi(2));
    let dirichlet = grid.nodes.mapv(|y| (PI * y).sin());
    for kk in 1..=k_max {
        let amp = 1.0 / (1.0 + (kk * kk) as f64);
        let phase_u = 2.0 * PI * rng.random::<f64>();
        let phase_t = 2.0 * PI * rng.random::<f64>();
        let cu = Complex64::from_polar(amp, phase_u);
        let ct = Complex64::from_polar(amp, phase_t);
        let psi = bubble.mapv(|v| cu * v);
        let theta = dirichlet.mapv(|v| ct * v);
        field.modes[kk - 1] = ModeState::from_stream_function(grid, kk as i32, psi, theta)?;
    }
    // H^2 norm of u over all modes (conjugates double the positive-k sum).
    let mut h2_sq = 0.0;
    let mut dx_theta_sq = 0.0;
    for m in &field.modes {
        let kf = m.k as f64;
        let (u1, u2) = m.velocity(grid);
        let l2 = |f: &Array1<Complex64>| grid.l2_norm(f).powi(2);
        let du1 = grid.apply_d1(&u1);
        let du2 = grid.apply_d1(&u2);
        let d2u1 = grid.apply_d2(&u1);
        let d2u2 = grid.apply_d2(&u2);
        let u_sq = l2(&u1) + l2(&u2);
        let du_sq = l2(&du1) + l2(&du2);
        let d2u_sq = l2(&d2u1) + l2(&d2u2);
        h2_sq += 2.0 * ((1.0 + kf * kf + kf.powi(4)) * u_sq + (1.0 + kf * kf) * du_sq + d2u_sq);
        dx_theta_sq += 2.0 * (1.0 + kf * kf) * l2(&m.theta);
    }
    let su = c_u * nu.sqrt() / h2_sq.sqrt().max(1e-300);
    let st = c_theta * nu.powf(5.0 / 6.0) / dx_theta_sq.sqrt().max(1e-300);
    for m in field.modes.iter_mut() {
        m.omega.mapv_inplace(|v| su * v);
        m.psi.mapv_inplace(|v| su * v);
        m.theta.mapv_inplace(|v| st * v);
    }
    Ok(field)
}

/// One threshold sweep point.
#[derive(Debug, Clone)]
pub struct ThresholdReport {
    pub nu: f64,
    pub sum_e: f64,
    pub sum_e_plain: f64,
    pub sum_g: f64,
    pub ratio_e: f64,
    pub ratio_g: f64,
    pub sum_e_linear: f64,
    pub stayed_stable: bool,
    pub blowup: bool,
}

/// Run one threshold point: random data at the (c_u nu^{1/2},
/// c_theta nu^{5/6}) amplitudes, nonlinear evolution to 20 nu^{-1/3}, and
/// the linearized run of the same data as the stability yardstick.
#[allow(clippy::too_many_arguments)]
pub fn threshold_point(
    grid: &ChannelGrid,
    base: &ShearProfile,
    nu: f64,
    c_u: f64,
    c_theta: f64,
    k_max: usize,
    seed: u64,
    t_end: Option<f64>,
) -> Result<ThresholdReport> {
    let t_end = t_end.unwrap_or(20.0 * nu.powf(-1.0 / 3.0));
    let initial = random_initial_field(grid, k_max, nu, c_u, c_theta, seed)?;
    let linear = evolve_perturbation(grid, &initial, base, nu, t_end, None, false)?;
    let nonlin = evolve_perturbation(grid, &initial, base, nu, t_end, None, true)?;
    let sum_e = nonlin.functionals.sum_e;
    let sum_g = nonlin.functionals.sum_g;
    let sum_e_linear = linear.functionals.sum_e;
    let blowup = nonlin.blowup.is_some();
    let stayed_stable = !blowup && sum_e <= 10.0 * sum_e_linear.max(1e-300);
    Ok(ThresholdReport {
        nu,
        sum_e,
        sum_e_plain: nonlin.functionals.sum_e_plain,
        sum_g,
        ratio_e: sum_e / nu.sqrt(),
        ratio_g: sum_g / nu.powf(5.0 / 6.0),
        sum_e_linear,
        stayed_stable,
        blowup,
    })
}
