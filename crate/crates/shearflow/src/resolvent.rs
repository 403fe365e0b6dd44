//! Frozen-coefficient Orr-Sommerfeld resolvent solves decomposed into a
//! Navier-slip solve plus two boundary-layer correctors, the boundary-layer
//! weight rho_k, the lambda-integral identity, and numerical audits of the
//! resolvent estimates.
//!
//! The discrete problem is the coupled first-order block system in (w, phi):
//! OS rows at interior nodes, relation rows (d_y^2 - k^2) phi = w at interior
//! nodes, and four boundary rows carrying the boundary conditions of the
//! variant being solved. All variants share the interior rows, so the
//! corrector assembly reproduces the monolithic clamped solve to solver
//! round-off.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::base_flow::ShearProfile;
use crate::error::{Error, Result};
use crate::grid::{rho_values, ChannelGrid, NormKind};
use crate::linalg::ComplexLu;
use crate::EPSILON_0;

const COND_LIMIT: f64 = 1e14;

/// One (nu, k, lambda) Orr-Sommerfeld problem with frozen profile V:
/// -nu (d_y^2 - k^2) w + i k (V - lambda) w - i k V'' phi + shift w = F.
pub struct ResolventProblem<'a> {
    pub nu: f64,
    pub k: i32,
    pub lambda: f64,
    pub shift: Complex64,
    pub profile: &'a ShearProfile,
    pub forcing: Array1<Complex64>,
}

impl<'a> ResolventProblem<'a> {
    /// Problem with the default shift -eps_0 nu^{1/3}.
    pub fn new(
        grid: &ChannelGrid,
        nu: f64,
        k: i32,
        lambda: f64,
        profile: &'a ShearProfile,
        forcing: Array1<Complex64>,
    ) -> Result<Self> {
        let shift = Complex64::new(-EPSILON_0 * nu.powf(1.0 / 3.0), 0.0);
        Self::with_shift(grid, nu, k, lambda, shift, profile, forcing)
    }

    pub fn with_shift(
        grid: &ChannelGrid,
        nu: f64,
        k: i32,
        lambda: f64,
        shift: Complex64,
        profile: &'a ShearProfile,
        forcing: Array1<Complex64>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidWavenumber);
        }
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::Validation(format!("viscosity {nu} outside (0, 1]")));
        }
        grid.check_len(forcing.len())?;
        grid.check_len(profile.values.len())?;
        let cap = 0.1 * (nu * (k as f64) * (k as f64)).powf(1.0 / 3.0);
        if shift.norm() > cap {
            return Err(Error::Validation(format!(
                "|shift| = {:.3e} exceeds 0.1 (nu k^2)^(1/3) = {:.3e}",
                shift.norm(),
                cap
            )));
        }
        Ok(Self {
            nu,
            k,
            lambda,
            shift,
            profile,
            forcing,
        })
    }
}

/// Assembled resolvent solution with its decomposition pieces.
pub struct ResolventSolution {
    pub w_na: Array1<Complex64>,
    pub phi_na: Array1<Complex64>,
    pub w1: Array1<Complex64>,
    pub phi1: Array1<Complex64>,
    pub w2: Array1<Complex64>,
    pub phi2: Array1<Complex64>,
    /// Quadratures of the sinh-window integrals against w_Na.
    pub c1: Complex64,
    pub c2: Complex64,
    /// Exact assembly coefficients of w1/w2 (from the Neumann defects;
    /// coeff_w1 ~ -c2 and coeff_w2 ~ c1 up to spectral quadrature error).
    pub coeff_w1: Complex64,
    pub coeff_w2: Complex64,
    pub w_total: Array1<Complex64>,
    pub phi_total: Array1<Complex64>,
    /// Velocity (d_y phi, -ik phi) of the assembled solution.
    pub u_total: (Array1<Complex64>, Array1<Complex64>),
}

/// Boundary-condition variant of the block system.
#[derive(Clone, Copy, PartialEq)]
enum BlockBc {
    /// w(0) = w(1) = 0, phi(0) = phi(1) = 0.
    NavierSlip,
    /// phi'(0), phi'(1) prescribed, phi(0) = phi(1) = 0
    /// (correctors and the monolithic clamped solve).
    Neumann,
}

fn block_matrix(
    grid: &ChannelGrid,
    nu: f64,
    k: i32,
    lambda: f64,
    shift: Complex64,
    profile: &ShearProfile,
    bc: BlockBc,
) -> Array2<Complex64> {
    let n = grid.n;
    let kf = k as f64;
    let k2 = kf * kf;
    let ik = Complex64::new(0.0, kf);
    let mut a = Array2::from_elem((2 * n, 2 * n), Complex64::ZERO);
    // w-block rows: OS equation at interior nodes, BC at walls.
    for i in 1..n - 1 {
        for j in 0..n {
            a[[i, j]] = Complex64::new(-nu * grid.d2[[i, j]], 0.0);
        }
        a[[i, i]] += nu * k2 + ik * (profile.values[i] - lambda) + shift;
        a[[i, n + i]] = -ik * profile.dy2[i];
    }
    match bc {
        BlockBc::NavierSlip => {
            a[[0, 0]] = Complex64::new(1.0, 0.0);
            a[[n - 1, n - 1]] = Complex64::new(1.0, 0.0);
        }
        BlockBc::Neumann => {
            for j in 0..n {
                a[[0, n + j]] = Complex64::new(grid.d1[[0, j]], 0.0);
                a[[n - 1, n + j]] = Complex64::new(grid.d1[[n - 1, j]], 0.0);
            }
        }
    }
    // phi-block rows: relation (d2 - k^2) phi = w at interior nodes,
    // Dirichlet rows at walls.
    for i in 1..n - 1 {
        for j in 0..n {
            a[[n + i, n + j]] = Complex64::new(grid.d2[[i, j]], 0.0);
        }
        a[[n + i, n + i]] -= k2;
        a[[n + i, i]] = Complex64::new(-1.0, 0.0);
    }
    a[[n, n]] = Complex64::new(1.0, 0.0);
    a[[2 * n - 1, 2 * n - 1]] = Complex64::new(1.0, 0.0);
    a
}

struct BlockSolver {
    lu: ComplexLu,
    n: usize,
}

impl BlockSolver {
    fn new(
        grid: &ChannelGrid,
        nu: f64,
        k: i32,
        lambda: f64,
        shift: Complex64,
        profile: &ShearProfile,
        bc: BlockBc,
    ) -> Result<Self> {
        let a = block_matrix(grid, nu, k, lambda, shift, profile, bc);
        let lu = ComplexLu::new(&a)?;
        let cond = lu.condition_estimate();
        if !cond.is_finite() || cond > COND_LIMIT {
            return Err(Error::NearSingular(cond));
        }
        Ok(Self { lu, n: grid.n })
    }

    /// L2(w)-operator norm of F -> w_Na by power iteration on R^H R,
    /// reusing the factorization. R = S A^{-1} P with P the embedding of F
    /// into the interior w-rows and S the extraction of the w-block; the
    /// adjoint in the weighted inner product is W^{-1} P^T A^{-H} S^T W.
    fn operator_norm(&self, grid: &ChannelGrid) -> f64 {
        let n = self.n;
        let w = &grid.quad_weights;
        let mut z: Array1<Complex64> = grid.nodes.mapv(|y| {
            Complex64::new(
                (std::f64::consts::PI * y).sin(),
                (2.0 * std::f64::consts::PI * y).sin(),
            )
        });
        let norm_w = |f: &Array1<Complex64>| -> f64 {
            (0..n).map(|i| w[i] * f[i].norm_sqr()).sum::<f64>().sqrt()
        };
        let nz = norm_w(&z);
        z.mapv_inplace(|v| v / nz);
        let mut sigma = 0.0;
        for _ in 0..12 {
            let (rw, _) = self.solve(&z, (Complex64::ZERO, Complex64::ZERO));
            let s = norm_w(&rw);
            // adjoint application
            let mut rhs = Array1::from_elem(2 * n, Complex64::ZERO);
            for i in 0..n {
                rhs[i] = w[i] * rw[i];
            }
            let y = self.lu.solve_transposed_conj(&rhs);
            let mut v = Array1::from_elem(n, Complex64::ZERO);
            for i in 1..n - 1 {
                v[i] = y[i] / w[i];
            }
            let nv = norm_w(&v);
            if nv == 0.0 {
                return 0.0;
            }
            v.mapv_inplace(|x| x / nv);
            let changed = (s - sigma).abs();
            sigma = s;
            z = v;
            if changed < 1e-4 * sigma {
                break;
            }
        }
        sigma
    }

    /// RHS: forcing at interior w-rows, boundary data in (row 0, row n-1).
    fn solve(
        &self,
        forcing: &Array1<Complex64>,
        bdry: (Complex64, Complex64),
    ) -> (Array1<Complex64>, Array1<Complex64>) {
        let n = self.n;
        let mut rhs = Array1::from_elem(2 * n, Complex64::ZERO);
        for i in 1..n - 1 {
            rhs[i] = forcing[i];
        }
        rhs[0] = bdry.0;
        rhs[n - 1] = bdry.1;
        let x = self.lu.solve(&rhs);
        let w = Array1::from_iter(x.iter().take(n).cloned());
        let phi = Array1::from_iter(x.iter().skip(n).cloned());
        (w, phi)
    }
}

/// Inhomogeneous OS solve with the Navier-slip boundary condition
/// w(0) = w(1) = phi(0) = phi(1) = 0.
pub fn solve_navier_slip(
    grid: &ChannelGrid,
    problem: &ResolventProblem,
) -> Result<(Array1<Complex64>, Array1<Complex64>)> {
    let solver = BlockSolver::new(
        grid,
        problem.nu,
        problem.k,
        problem.lambda,
        problem.shift,
        problem.profile,
        BlockBc::NavierSlip,
    )?;
    Ok(solver.solve(&problem.forcing, (Complex64::ZERO, Complex64::ZERO)))
}

/// Homogeneous OS solve with the corrector boundary data:
/// which = 1: phi'(0) = 0, phi'(1) = 1; which = 2: phi'(0) = 1, phi'(1) = 0.
pub fn solve_corrector(
    grid: &ChannelGrid,
    problem: &ResolventProblem,
    which: u8,
) -> Result<(Array1<Complex64>, Array1<Complex64>)> {
    assert!(which == 1 || which == 2, "corrector index must be 1 or 2");
    let solver = BlockSolver::new(
        grid,
        problem.nu,
        problem.k,
        problem.lambda,
        problem.shift,
        problem.profile,
        BlockBc::Neumann,
    )?;
    let zero = Array1::from_elem(grid.n, Complex64::ZERO);
    let one = Complex64::new(1.0, 0.0);
    let data = if which == 1 {
        (Complex64::ZERO, one)
    } else {
        (one, Complex64::ZERO)
    };
    Ok(solver.solve(&zero, data))
}

/// The sinh-window quadratures of the Navier-slip vorticity:
/// c1 = int_0^1 sinh(k(1-y))/sinh(k) w_Na dy, c2 with sinh(ky)/sinh(k).
pub fn boundary_coefficients(
    grid: &ChannelGrid,
    k: i32,
    w_na: &Array1<Complex64>,
) -> (Complex64, Complex64) {
    let kf = k as f64;
    let denom = kf.sinh();
    let mut c1 = Complex64::ZERO;
    let mut c2 = Complex64::ZERO;
    for i in 0..grid.n {
        let y = grid.nodes[i];
        let q = grid.quad_weights[i];
        c1 += q * ((kf * (1.0 - y)).sinh() / denom) * w_na[i];
        c2 += q * ((kf * y).sinh() / denom) * w_na[i];
    }
    (c1, c2)
}

/// Run the Navier-slip solve and both correctors, then combine them so the
/// assembled stream function satisfies all four clamped conditions. The
/// combination coefficients come from the Neumann defects of phi_Na, which
/// is exact at the discrete level; the sinh quadratures c1, c2 are also
/// recorded.
pub fn assemble_clamped(
    grid: &ChannelGrid,
    problem: &ResolventProblem,
) -> Result<ResolventSolution> {
    let (w_na, phi_na) = solve_navier_slip(grid, problem)?;

    let corr = BlockSolver::new(
        grid,
        problem.nu,
        problem.k,
        problem.lambda,
        problem.shift,
        problem.profile,
        BlockBc::Neumann,
    )?;
    let zero = Array1::from_elem(grid.n, Complex64::ZERO);
    let one = Complex64::new(1.0, 0.0);
    let (w1, phi1) = corr.solve(&zero, (Complex64::ZERO, one));
    let (w2, phi2) = corr.solve(&zero, (one, Complex64::ZERO));

    // Neumann defects of phi_Na, evaluated with the same D1 rows the
    // boundary conditions use.
    let n = grid.n;
    let d0: Complex64 = (0..n).map(|j| grid.d1[[0, j]] * phi_na[j]).sum();
    let d1: Complex64 = (0..n).map(|j| grid.d1[[n - 1, j]] * phi_na[j]).sum();
    let coeff_w1 = -d1;
    let coeff_w2 = -d0;

    let w_total = Array1::from_iter((0..n).map(|i| w_na[i] + coeff_w1 * w1[i] + coeff_w2 * w2[i]));
    let phi_total =
        Array1::from_iter((0..n).map(|i| phi_na[i] + coeff_w1 * phi1[i] + coeff_w2 * phi2[i]));
    let du = grid.apply_d1(&phi_total);
    let ik = Complex64::new(0.0, problem.k as f64);
    let u2 = phi_total.mapv(|v| -ik * v);

    let (c1, c2) = boundary_coefficients(grid, problem.k, &w_na);

    Ok(ResolventSolution {
        w_na,
        phi_na,
        w1,
        phi1,
        w2,
        phi2,
        c1,
        c2,
        coeff_w1,
        coeff_w2,
        w_total,
        phi_total,
        u_total: (du, u2),
    })
}

/// Monolithic clamped solve: same interior rows, boundary rows
/// phi(0) = phi(1) = phi'(0) = phi'(1) = 0.
pub fn solve_clamped_monolithic(
    grid: &ChannelGrid,
    problem: &ResolventProblem,
) -> Result<(Array1<Complex64>, Array1<Complex64>)> {
    let solver = BlockSolver::new(
        grid,
        problem.nu,
        problem.k,
        problem.lambda,
        problem.shift,
        problem.profile,
        BlockBc::Neumann,
    )?;
    Ok(solver.solve(&problem.forcing, (Complex64::ZERO, Complex64::ZERO)))
}

/// Relative L2 residual of the OS equation over interior nodes.
pub fn os_residual(
    grid: &ChannelGrid,
    problem: &ResolventProblem,
    w: &Array1<Complex64>,
    phi: &Array1<Complex64>,
) -> f64 {
    let n = grid.n;
    let kf = problem.k as f64;
    let ik = Complex64::new(0.0, kf);
    let d2w = grid.apply_d2(w);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 1..n - 1 {
        let lhs = -problem.nu * (d2w[i] - kf * kf * w[i])
            + ik * (problem.profile.values[i] - problem.lambda) * w[i]
            - ik * problem.profile.dy2[i] * phi[i]
            + problem.shift * w[i];
        let r = lhs - problem.forcing[i];
        num += grid.quad_weights[i] * r.norm_sqr();
        den += grid.quad_weights[i] * problem.forcing[i].norm_sqr();
    }
    let wnorm = grid.l2_norm(w);
    (num.sqrt()) / den.sqrt().max(wnorm).max(1e-300)
}

/// Boundary-layer weight with its layer width nu^{1/3} |k|^{-1/3}.
pub struct RhoWeight {
    pub values: Array1<f64>,
    pub layer_width: f64,
}

pub fn rho_weight(grid: &ChannelGrid, nu: f64, k: i32) -> Result<RhoWeight> {
    let values = rho_values(grid, nu, k)?;
    let layer_width = nu.powf(1.0 / 3.0) * (k.unsigned_abs() as f64).powf(-1.0 / 3.0);
    Ok(RhoWeight {
        values,
        layer_width,
    })
}

/// Pointwise rho_k(y).
pub fn rho_at(nu: f64, k: i32, y: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidWavenumber);
    }
    let width = nu.powf(1.0 / 3.0) * (k.unsigned_abs() as f64).powf(-1.0 / 3.0);
    if width >= 0.5 {
        return Err(Error::LayerTooWide(width));
    }
    Ok(if y <= width {
        y / width
    } else if y >= 1.0 - width {
        (1.0 - y) / width
    } else {
        1.0
    })
}

/// Result of the lambda-integral identity check at a fixed y.
pub struct RhoIntegralCheck {
    /// Quadrature value at an interior point (rho = 1).
    pub value: f64,
    /// value / (nu^{-1/6} |k|^{-1/3}); constant across (nu, k).
    pub ratio: f64,
    /// Same pair evaluated at a ramp point (rho = 1/2).
    pub value_ramp: f64,
    pub ratio_ramp: f64,
    /// Relative truncation tail bound of the quadrature.
    pub tail: f64,
}

/// Evaluate int_R (|s|^{3/2} rho + (nu k^2)^{1/4} |s|^{3/4} rho^{-1/2})^{-1} ds
/// (s = lambda - k V(0)) by adaptive quadrature, at an interior point and at
/// a ramp midpoint, and report the ratio against nu^{-1/6} |k|^{-1/3}.
pub fn rho_integral_check(nu: f64, k: i32) -> Result<RhoIntegralCheck> {
    if k == 0 {
        return Err(Error::InvalidWavenumber);
    }
    let scale = nu.powf(-1.0 / 6.0) * (k.unsigned_abs() as f64).powf(-1.0 / 3.0);
    let (value, tail) = rho_lambda_integral(nu, k, 1.0)?;
    let (value_ramp, tail_ramp) = rho_lambda_integral(nu, k, 0.5)?;
    Ok(RhoIntegralCheck {
        value,
        ratio: value / scale,
        value_ramp,
        ratio_ramp: value_ramp / scale,
        tail: tail.max(tail_ramp),
    })
}

/// The integrand has an integrable |s|^{-3/4} singularity at s = 0; the
/// substitution s = sigma^4 removes it:
/// I = 8 int_0^inf d sigma / (rho sigma^3 + a rho^{-1/2}), a = (nu k^2)^{1/4}.
fn rho_lambda_integral(nu: f64, k: i32, rho: f64) -> Result<(f64, f64)> {
    let a = (nu * (k as f64) * (k as f64)).powf(0.25);
    let g = |sigma: f64| 8.0 / (rho * sigma.powi(3) + a / rho.sqrt());
    // Tail: int_S^inf 8/(rho sigma^3) = 4/(rho S^2).
    let mut smax = (a / rho).powf(1.0 / 3.0).max(1.0);
    let mut value;
    let mut tail;
    loop {
        value = adaptive_simpson(&g, 0.0, smax, 1e-10);
        tail = 4.0 / (rho * smax * smax);
        if tail < 1e-8 * value {
            break;
        }
        smax *= 4.0;
        if smax > 1e18 {
            return Err(Error::NonConvergentTail);
        }
    }
    Ok((value, tail / value))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(
        f,
        a,
        fa,
        b,
        fb,
        whole,
        m,
        fm,
        rel_tol * whole.abs().max(1e-300),
        48,
    )
}

/// One supremum row of the estimate audit.
#[derive(Debug, Clone)]
pub struct AuditRow {
    pub estimate_id: &'static str,
    pub nu: f64,
    pub k: i32,
    pub lambda_at_sup: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

pub struct EstimateAudit {
    pub rows: Vec<AuditRow>,
    /// lambda points where a solve failed (skipped, sweep continues).
    pub failed_points: usize,
    pub evaluated_points: usize,
}

const ESTIMATE_IDS: [&str; 13] = [
    "wL2.u",
    "wL2.w",
    "wL2.dw",
    "wL2.opnorm",
    "wH1.w",
    "wH1.wL1",
    "wH1.Vlam",
    "wHm1.u",
    "wHm1.w",
    "wHm1.dw",
    "c1rho.FL2",
    "c1rho.Hm1",
    "c1.FH1",
];

/// Index of the operator-norm row (the resonance tracker of the sweep).
const OPNORM_ROW: usize = 3;

struct LambdaSample {
    lambda: f64,
    lhs: [f64; 13],
}

/// Sweep lambda over the critical band and audit the resolvent estimates:
/// for each estimate term, the supremum over lambda of LHS / RHS.
///
/// The sweep variable is the frequency-scaled parameter mu = k lambda:
/// 64 uniform points on [k V(0), k V(1)], 16 points outside up to distance
/// 10 (nu k^2)^{1/3} k ||V'||_inf, then up to 8 dyadic refinement levels
/// around the running maximizer of ||w_Na|| / ||F||, down to spacing
/// (nu k^2)^{1/3} / 8.
pub fn estimate_audit(
    grid: &ChannelGrid,
    profile: &ShearProfile,
    nu: f64,
    k: i32,
    forcing: &Array1<Complex64>,
) -> Result<EstimateAudit> {
    if k == 0 {
        return Err(Error::InvalidWavenumber);
    }
    grid.check_len(forcing.len())?;
    let kf = k as f64;
    let l2f = grid.l2_norm(forcing);
    let h1f = crate::grid::norm(grid, NormKind::H1k { k }, forcing)?;
    let hm1f = crate::grid::norm(grid, NormKind::H1kDual { k }, forcing)?;
    if l2f == 0.0 {
        let rows = ESTIMATE_IDS
            .iter()
            .map(|id| AuditRow {
                estimate_id: id,
                nu,
                k,
                lambda_at_sup: 0.0,
                lhs: 0.0,
                rhs: 0.0,
                ratio: 0.0,
            })
            .collect();
        return Ok(EstimateAudit {
            rows,
            failed_points: 0,
            evaluated_points: 0,
        });
    }

    let rho = rho_values(grid, nu, k)?;
    let v0 = profile.values[0];
    let v1 = profile.values[grid.n - 1];
    let layer_mu = (nu * kf * kf).powf(1.0 / 3.0);

    // RHS of each estimate term (constant in lambda). The operator-norm
    // row is already a ratio, so its RHS is one.
    let rhs: [f64; 13] = [
        l2f,
        l2f,
        l2f,
        1.0,
        h1f,
        h1f,
        h1f,
        hm1f,
        hm1f,
        hm1f,
        nu.powf(-1.0 / 3.0) * kf.abs().powf(-2.0 / 3.0) * l2f,
        nu.powf(-2.0 / 3.0) * kf.abs().powf(-1.0 / 3.0) * hm1f,
        nu.powf(-1.0 / 3.0) * kf.abs().powf(-5.0 / 3.0) * h1f,
    ];

    let eval = |mu: f64| -> Result<LambdaSample> {
        let lambda = mu / kf;
        let problem = ResolventProblem::new(grid, nu, k, lambda, profile, forcing.clone())?;
        let ns = BlockSolver::new(
            grid,
            problem.nu,
            problem.k,
            problem.lambda,
            problem.shift,
            problem.profile,
            BlockBc::NavierSlip,
        )?;
        let (w_na, phi_na) = ns.solve(&problem.forcing, (Complex64::ZERO, Complex64::ZERO));
        let opnorm = ns.operator_norm(grid);
        let corr = BlockSolver::new(
            grid,
            problem.nu,
            problem.k,
            problem.lambda,
            problem.shift,
            problem.profile,
            BlockBc::Neumann,
        )?;
        let zero = Array1::from_elem(grid.n, Complex64::ZERO);
        let one = Complex64::new(1.0, 0.0);
        let (w1, _) = corr.solve(&zero, (Complex64::ZERO, one));
        let (w2, _) = corr.solve(&zero, (one, Complex64::ZERO));
        let (c1, c2) = boundary_coefficients(grid, k, &w_na);

        let w_l2 = grid.l2_norm(&w_na);
        let w_l1 = grid.l1_norm(&w_na);
        let dw = {
            let d = grid.apply_d1(&w_na);
            (grid.l2_norm(&d).powi(2) + kf * kf * w_l2 * w_l2).sqrt()
        };
        let u_na = {
            let d = grid.apply_d1(&phi_na);
            (grid.l2_norm(&d).powi(2) + kf * kf * grid.l2_norm(&phi_na).powi(2)).sqrt()
        };
        let vlam = {
            let f = Array1::from_iter((0..grid.n).map(|i| (profile.values[i] - lambda) * w_na[i]));
            grid.l2_norm(&f)
        };
        let rho_half = |w: &Array1<Complex64>| -> f64 {
            (0..grid.n)
                .map(|i| grid.quad_weights[i] * rho[i] * w[i].norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        // rho^{-1/2}|w|^2 has an integrable singularity at the walls where
        // rho = 0; the wall nodes are excluded from the quadrature.
        let rho_negq = |w: &Array1<Complex64>| -> f64 {
            (1..grid.n - 1)
                .map(|i| grid.quad_weights[i] * rho[i].powf(-0.5) * w[i].norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let res0 = (1.0 + (kf * (lambda - v0)).abs()).powf(0.75);
        let res1 = (1.0 + (kf * (lambda - v1)).abs()).powf(0.75);
        let res0q = (1.0 + (kf * (lambda - v0)).abs()).powf(0.375);
        let res1q = (1.0 + (kf * (lambda - v1)).abs()).powf(0.375);
        let c1a = c1.norm();
        let c2a = c2.norm();
        let nu18k14 = nu.powf(0.125) * kf.abs().powf(0.25);

        let c1rho = res0 * c1a * rho_half(&w1)
            + res1 * c2a * rho_half(&w2)
            + nu18k14 * res0q * c1a * rho_negq(&w1)
            + nu18k14 * res1q * c2a * rho_negq(&w2);
        let c1fh1 = res0 * c1a * grid.l2_norm(&w1) + res1 * c2a * grid.l2_norm(&w2);

        Ok(LambdaSample {
            lambda,
            lhs: [
                nu.powf(1.0 / 6.0) * kf.abs().powf(4.0 / 3.0) * u_na,
                nu.powf(1.0 / 3.0) * kf.abs().powf(2.0 / 3.0) * w_l2,
                nu.powf(2.0 / 3.0) * kf.abs().powf(1.0 / 3.0) * dw,
                nu.powf(1.0 / 3.0) * kf.abs().powf(2.0 / 3.0) * opnorm,
                nu.powf(1.0 / 6.0) * kf.abs().powf(4.0 / 3.0) * w_l2,
                nu.powf(1.0 / 12.0) * kf.abs().powf(5.0 / 3.0) * w_l1,
                kf * kf * vlam,
                nu.sqrt() * kf.abs() * u_na,
                nu.powf(2.0 / 3.0) * kf.abs().powf(1.0 / 3.0) * w_l2,
                nu * dw,
                c1rho,
                c1rho,
                c1fh1,
            ],
        })
    };

    let mu_lo = (kf * v0).min(kf * v1);
    let mu_hi = (kf * v0).max(kf * v1);
    let vp_max = profile.max_slope();
    let margin = 10.0 * layer_mu * kf.abs() * vp_max;
    let mut mus: Vec<f64> = (0..64)
        .map(|i| mu_lo + (mu_hi - mu_lo) * i as f64 / 63.0)
        .collect();
    for i in 1..=8 {
        mus.push(mu_lo - margin * i as f64 / 8.0);
        mus.push(mu_hi + margin * i as f64 / 8.0);
    }

    let mut samples: Vec<LambdaSample> = Vec::new();
    let mut failed = 0usize;
    let mut evaluated = 0usize;
    let run_batch = |mus: &[f64], samples: &mut Vec<LambdaSample>, failed: &mut usize| {
        let results: Vec<Result<LambdaSample>> = mus.par_iter().map(|&mu| eval(mu)).collect();
        for r in results {
            match r {
                Ok(s) => samples.push(s),
                Err(_) => *failed += 1,
            }
        }
    };
    evaluated += mus.len();
    run_batch(&mus, &mut samples, &mut failed);

    // Dyadic refinement around the running maximizer of the resolvent
    // operator norm.
    let mut h = (mu_hi - mu_lo).max(layer_mu) / 63.0;
    let target = layer_mu / 8.0;
    for _ in 0..8 {
        if h <= target || samples.is_empty() {
            break;
        }
        let best = samples
            .iter()
            .max_by(|a, b| a.lhs[OPNORM_ROW].partial_cmp(&b.lhs[OPNORM_ROW]).unwrap())
            .map(|s| s.lambda * kf)
            .unwrap();
        h *= 0.5;
        let new_mus: Vec<f64> = [-3.0, -1.0, 1.0, 3.0]
            .iter()
            .map(|&c| best + c * 0.5 * h)
            .filter(|&mu| {
                samples
                    .iter()
                    .all(|s| (s.lambda * kf - mu).abs() > 1e-12 * (1.0 + mu.abs()))
            })
            .collect();
        evaluated += new_mus.len();
        run_batch(&new_mus, &mut samples, &mut failed);
    }

    let mut rows = Vec::with_capacity(13);
    for (t, id) in ESTIMATE_IDS.iter().enumerate() {
        let mut best_lambda = 0.0;
        let mut best_lhs = 0.0;
        for s in &samples {
            if s.lhs[t] > best_lhs {
                best_lhs = s.lhs[t];
                best_lambda = s.lambda;
            }
        }
        rows.push(AuditRow {
            estimate_id: id,
            nu,
            k,
            lambda_at_sup: best_lambda,
            lhs: best_lhs,
            rhs: rhs[t],
            ratio: best_lhs / rhs[t],
        });
    }
    Ok(EstimateAudit {
        rows,
        failed_points: failed,
        evaluated_points: evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_flow::{couette, profile_unchecked, validate_profile};
    use crate::grid::{build_grid, helmholtz_solve};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn quad_profile(grid: &ChannelGrid) -> ShearProfile {
        let u = grid.nodes.mapv(|y| y + 0.1 * y * y);
        validate_profile(grid, &u, false).unwrap()
    }

    fn sin_forcing(grid: &ChannelGrid) -> Array1<Complex64> {
        grid.nodes.mapv(|y| Complex64::new((PI * y).sin(), 0.0))
    }

    #[test]
    fn zero_forcing_gives_zero_solution() {
        let g = build_grid(65).unwrap();
        let p = quad_profile(&g);
        let f = Array1::from_elem(g.n, Complex64::ZERO);
        let problem = ResolventProblem::new(&g, 1e-3, 1, 0.5, &p, f).unwrap();
        let (w, phi) = solve_navier_slip(&g, &problem).unwrap();
        assert!(w.iter().all(|v| v.norm() < 1e-12));
        assert!(phi.iter().all(|v| v.norm() < 1e-12));
        let sol = assemble_clamped(&g, &problem).unwrap();
        assert!(sol.w_total.iter().all(|v| v.norm() < 1e-12));
        assert_eq!(sol.c1, Complex64::ZERO);
    }

    #[test]
    fn navier_slip_boundary_values_and_residual() {
        let g = build_grid(97).unwrap();
        let p = quad_profile(&g);
        let problem = ResolventProblem::new(&g, 1e-3, 1, 0.5, &p, sin_forcing(&g)).unwrap();
        let (w, phi) = solve_navier_slip(&g, &problem).unwrap();
        assert!(w[0].norm() < 1e-8 && w[g.n - 1].norm() < 1e-8);
        assert!(phi[0].norm() < 1e-10 && phi[g.n - 1].norm() < 1e-10);
        let r = os_residual(&g, &problem, &w, &phi);
        assert!(r < 1e-7, "relative residual {r:e}");
        // helmholtz consistency: phi solves the Dirichlet problem for w
        let phi2 = helmholtz_solve(&g, 1, &w).unwrap();
        let err = (0..g.n).fold(0.0f64, |a, i| a.max((phi[i] - phi2[i]).norm()));
        assert!(err < 1e-9, "phi relation defect {err:e}");
    }

    #[test]
    fn navier_slip_self_convergence() {
        // Couette, localized Gaussian forcing; double-resolution oracle.
        let nu = 1e-3;
        let bump = |y: f64| Complex64::new((-((y - 0.3) / 0.1).powi(2)).exp(), 0.0);
        let gc = build_grid(97).unwrap();
        let gf = build_grid(193).unwrap();
        let pc = couette(&gc);
        let pf = couette(&gf);
        let fc = gc.nodes.mapv(bump);
        let ff = gf.nodes.mapv(bump);
        let prc = ResolventProblem::new(&gc, nu, 1, 0.5, &pc, fc).unwrap();
        let prf = ResolventProblem::new(&gf, nu, 1, 0.5, &pf, ff).unwrap();
        let (wc, _) = solve_navier_slip(&gc, &prc).unwrap();
        let (wf, _) = solve_navier_slip(&gf, &prf).unwrap();
        let xs: Vec<f64> = gf.nodes.to_vec();
        let re: Vec<f64> = wf.iter().map(|z| z.re).collect();
        let im: Vec<f64> = wf.iter().map(|z| z.im).collect();
        let eval: Vec<f64> = gc.nodes.to_vec();
        let re_i = crate::grid::barycentric_interpolate(&xs, &re, &eval);
        let im_i = crate::grid::barycentric_interpolate(&xs, &im, &eval);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..gc.n {
            let d = wc[i] - Complex64::new(re_i[i], im_i[i]);
            num += gc.quad_weights[i] * d.norm_sqr();
            den += gc.quad_weights[i] * wc[i].norm_sqr();
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-6, "self-convergence defect {rel:e}");
    }

    #[test]
    fn resonant_amplification_is_finite() {
        let g = build_grid(129).unwrap();
        let p = quad_profile(&g);
        let problem = ResolventProblem::new(&g, 1e-3, 1, 0.55, &p, sin_forcing(&g)).unwrap();
        let (w, _) = solve_navier_slip(&g, &problem).unwrap();
        let ratio = 1e-3f64.powf(1.0 / 3.0) * g.l2_norm(&w) / g.l2_norm(&problem.forcing);
        assert!(ratio.is_finite() && ratio < 50.0, "ratio {ratio}");
    }

    #[test]
    fn corrector_boundary_data() {
        let g = build_grid(97).unwrap();
        let p = quad_profile(&g);
        let f = Array1::from_elem(g.n, Complex64::ZERO);
        let problem = ResolventProblem::new(&g, 1e-3, 1, 0.5, &p, f).unwrap();
        for which in [1u8, 2] {
            let (_, phi) = solve_corrector(&g, &problem, which).unwrap();
            let d0: Complex64 = (0..g.n).map(|j| g.d1[[0, j]] * phi[j]).sum();
            let d1: Complex64 = (0..g.n).map(|j| g.d1[[g.n - 1, j]] * phi[j]).sum();
            let (e0, e1) = if which == 1 { (0.0, 1.0) } else { (1.0, 0.0) };
            assert!((d0 - Complex64::new(e0, 0.0)).norm() < 1e-8);
            assert!((d1 - Complex64::new(e1, 0.0)).norm() < 1e-8);
            assert!(phi[0].norm() < 1e-10 && phi[g.n - 1].norm() < 1e-10);
        }
    }

    #[test]
    fn corrector_reflection_symmetry() {
        // For Couette, conj(reflect(w2 at lambda)) = -w1 at 1 - lambda.
        let g = build_grid(97).unwrap();
        let p = couette(&g);
        let f = Array1::from_elem(g.n, Complex64::ZERO);
        let nu = 1e-3;
        let pr_a = ResolventProblem::new(&g, nu, 1, 0.3, &p, f.clone()).unwrap();
        let pr_b = ResolventProblem::new(&g, nu, 1, 0.7, &p, f).unwrap();
        let (w2, _) = solve_corrector(&g, &pr_a, 2).unwrap();
        let (w1, _) = solve_corrector(&g, &pr_b, 1).unwrap();
        let n = g.n;
        let err = (0..n).fold(0.0f64, |a, i| a.max((w2[n - 1 - i].conj() + w1[i]).norm()));
        let scale = w1.iter().fold(0.0f64, |a, v| a.max(v.norm()));
        assert!(
            err < 1e-7 * scale.max(1.0),
            "reflection defect {err:e} (scale {scale:e})"
        );
    }

    #[test]
    fn corrector_mass_concentrates_in_boundary_layer() {
        let g = build_grid(129).unwrap();
        let p = quad_profile(&g);
        let f = Array1::from_elem(g.n, Complex64::ZERO);
        let nu = 1e-4;
        let problem = ResolventProblem::new(&g, nu, 1, 0.5, &p, f).unwrap();
        let (w1, _) = solve_corrector(&g, &problem, 1).unwrap();
        let cut = 1.0 - 3.0 * nu.powf(1.0 / 3.0);
        let mut layer = 0.0;
        let mut total = 0.0;
        for i in 0..g.n {
            let m = g.quad_weights[i] * w1[i].norm_sqr();
            total += m;
            if g.nodes[i] >= cut {
                layer += m;
            }
        }
        assert!(
            layer.sqrt() >= 0.5 * total.sqrt(),
            "layer fraction {}",
            layer.sqrt() / total.sqrt()
        );
    }

    #[test]
    fn boundary_coefficient_closed_forms() {
        let g = build_grid(97).unwrap();
        // w = sinh(k y) sinh(k): c1 = int sinh(k(1-y)) sinh(k y) dy
        //                           = (cosh k - sinh k / k) / 2
        let k = 2;
        let kf = k as f64;
        let w = g
            .nodes
            .mapv(|y| Complex64::new((kf * y).sinh() * kf.sinh(), 0.0));
        let (c1, _) = boundary_coefficients(&g, k, &w);
        let expect = 0.5 * (kf.cosh() - kf.sinh() / kf);
        assert!((c1.re - expect).abs() < 1e-10 * expect);
        assert!(c1.im.abs() < 1e-14);

        // w = 1, k = 32: c1 = (cosh k - 1)/(k sinh k) ~ 1/k
        let k = 32;
        let kf = k as f64;
        let ones = Array1::from_elem(g.n, Complex64::new(1.0, 0.0));
        let (c1, c2) = boundary_coefficients(&g, k, &ones);
        let expect = (kf.cosh() - 1.0) / (kf * kf.sinh());
        assert!(
            (c1.re - expect).abs() < 1e-10,
            "c1 = {}, expect {}",
            c1.re,
            expect
        );
        // symmetric window: c2 equals c1 for even data
        assert!((c2.re - c1.re).abs() < 1e-12);
        assert!((expect - 1.0 / kf).abs() < 2.0 / (kf * kf));
    }

    #[test]
    fn zero_w_gives_zero_coefficients() {
        let g = build_grid(65).unwrap();
        let z = Array1::from_elem(g.n, Complex64::ZERO);
        let (c1, c2) = boundary_coefficients(&g, 3, &z);
        assert_eq!(c1, Complex64::ZERO);
        assert_eq!(c2, Complex64::ZERO);
    }

    #[test]
    fn assembled_matches_monolithic_and_is_clamped() {
        let g = build_grid(97).unwrap();
        let p = quad_profile(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..6 {
            let nu = [1e-2, 1e-3, 1e-4][trial % 3];
            let k = [1, 2, 3][(trial + 1) % 3];
            let lambda = 0.2 + 0.6 * rng.random::<f64>();
            let f: Array1<Complex64> = g.nodes.mapv(|y| {
                Complex64::new(
                    (PI * y).sin() + 0.3 * (2.0 * PI * y).sin(),
                    0.2 * (PI * y).sin(),
                )
            });
            let problem = ResolventProblem::new(&g, nu, k, lambda, &p, f).unwrap();
            let sol = assemble_clamped(&g, &problem).unwrap();
            let (wm, _pm) = solve_clamped_monolithic(&g, &problem).unwrap();
            let scale = g.l2_norm(&wm);
            let mut num = 0.0;
            for i in 0..g.n {
                num += g.quad_weights[i] * (sol.w_total[i] - wm[i]).norm_sqr();
            }
            let rel = num.sqrt() / scale;
            assert!(rel < 1e-6, "trial {trial}: decomposition defect {rel:e}");
            // all four clamped boundary values
            let d0: Complex64 = (0..g.n).map(|j| g.d1[[0, j]] * sol.phi_total[j]).sum();
            let d1: Complex64 = (0..g.n)
                .map(|j| g.d1[[g.n - 1, j]] * sol.phi_total[j])
                .sum();
            assert!(sol.phi_total[0].norm() < 1e-7);
            assert!(sol.phi_total[g.n - 1].norm() < 1e-7);
            assert!(d0.norm() < 1e-7, "phi'(0) = {:e}", d0.norm());
            assert!(d1.norm() < 1e-7, "phi'(1) = {:e}", d1.norm());
        }
    }

    #[test]
    fn sinh_quadratures_match_neumann_defects_at_resolved_nu() {
        // c1 = -phi_Na'(0), c2 = +phi_Na'(1) by integration by parts; at
        // nu = 1e-2 the critical layer is wide and quadrature is spectral.
        let g = build_grid(97).unwrap();
        let p = quad_profile(&g);
        let problem = ResolventProblem::new(&g, 1e-2, 1, 0.5, &p, sin_forcing(&g)).unwrap();
        let sol = assemble_clamped(&g, &problem).unwrap();
        let d0: Complex64 = (0..g.n).map(|j| g.d1[[0, j]] * sol.phi_na[j]).sum();
        let d1: Complex64 = (0..g.n).map(|j| g.d1[[g.n - 1, j]] * sol.phi_na[j]).sum();
        let scale = sol.c1.norm().max(sol.c2.norm());
        assert!((sol.c1 + d0).norm() < 1e-8 * scale, "c1 vs -phi'(0)");
        assert!((sol.c2 - d1).norm() < 1e-8 * scale, "c2 vs +phi'(1)");
    }

    #[test]
    fn conjugation_symmetry() {
        // In the wave-speed variable, (-k, lambda, conj F) pairs with
        // conj(k, lambda, F); the frequency k*lambda flips sign.
        let g = build_grid(65).unwrap();
        let p = quad_profile(&g);
        let f: Array1<Complex64> = g
            .nodes
            .mapv(|y| Complex64::new((PI * y).sin(), 0.4 * (2.0 * PI * y).sin()));
        let fc = f.mapv(|z| z.conj());
        let pr = ResolventProblem::new(&g, 1e-3, 2, 0.6, &p, f).unwrap();
        let prc = ResolventProblem::new(&g, 1e-3, -2, 0.6, &p, fc).unwrap();
        let (w, _) = solve_navier_slip(&g, &pr).unwrap();
        let (wc, _) = solve_navier_slip(&g, &prc).unwrap();
        let err = (0..g.n).fold(0.0f64, |a, i| a.max((wc[i] - w[i].conj()).norm()));
        let scale = g.l2_norm(&w);
        assert!(err < 1e-9 * scale.max(1.0), "conjugation defect {err:e}");
    }

    #[test]
    fn linearity_in_forcing() {
        let g = build_grid(65).unwrap();
        let p = quad_profile(&g);
        let f1 = sin_forcing(&g);
        let f2: Array1<Complex64> = g.nodes.mapv(|y| Complex64::new(0.0, (2.0 * PI * y).sin()));
        let a = Complex64::new(0.7, -0.2);
        let b = Complex64::new(-0.1, 1.3);
        let combo = Array1::from_iter(f1.iter().zip(f2.iter()).map(|(&x, &y)| a * x + b * y));
        let mk = |f: Array1<Complex64>| ResolventProblem::new(&g, 1e-3, 1, 0.4, &p, f).unwrap();
        let (w1, _) = solve_navier_slip(&g, &mk(f1)).unwrap();
        let (w2, _) = solve_navier_slip(&g, &mk(f2)).unwrap();
        let (wc, _) = solve_navier_slip(&g, &mk(combo)).unwrap();
        let err = (0..g.n).fold(0.0f64, |acc, i| {
            acc.max((wc[i] - a * w1[i] - b * w2[i]).norm())
        });
        let scale = g.l2_norm(&wc).max(1e-30);
        assert!(err < 1e-10 * scale.max(1.0), "superposition defect {err:e}");
    }

    #[test]
    fn rho_weight_examples() {
        let g = build_grid(129).unwrap();
        let rw = rho_weight(&g, 1e-3, 1).unwrap();
        assert!((rw.layer_width - 0.1).abs() < 1e-12);
        assert_eq!(rho_at(1e-3, 1, 0.5).unwrap(), 1.0);
        assert!((rho_at(1e-3, 1, 0.05).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(rw.values[0], 0.0);
        assert_eq!(rw.values[g.n - 1], 0.0);
    }

    #[test]
    fn rho_integral_identity() {
        // Exact constant: substitution gives I = C0 nu^{-1/6} |k|^{-1/3}
        // with C0 = 16 pi / (3 sqrt(3)), independent of rho and (nu, k).
        let c0 = 16.0 * PI / (3.0 * 3.0f64.sqrt());
        for (nu, k) in [(1e-4, 1), (1e-6, 1), (1e-4, 8)] {
            let chk = rho_integral_check(nu, k).unwrap();
            assert!(
                (chk.ratio - c0).abs() < 1e-4 * c0,
                "nu={nu}, k={k}: ratio {} vs {}",
                chk.ratio,
                c0
            );
            assert!((chk.ratio_ramp - c0).abs() < 1e-4 * c0);
            assert!(chk.tail < 1e-7);
        }
        // pairwise constancy to 1%
        let a = rho_integral_check(1e-4, 1).unwrap().ratio;
        let b = rho_integral_check(1e-6, 1).unwrap().ratio;
        let c = rho_integral_check(1e-4, 8).unwrap().ratio;
        assert!((a / b - 1.0).abs() < 0.01);
        assert!((a / c - 1.0).abs() < 0.01);
    }

    #[test]
    fn shift_cap_is_enforced() {
        let g = build_grid(65).unwrap();
        let p = quad_profile(&g);
        let f = Array1::from_elem(g.n, Complex64::ZERO);
        let too_big = Complex64::new(0.5, 0.0);
        assert!(matches!(
            ResolventProblem::with_shift(&g, 1e-3, 1, 0.5, too_big, &p, f),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn audit_produces_bounded_rows() {
        let g = build_grid(65).unwrap();
        let p = quad_profile(&g);
        let audit = estimate_audit(&g, &p, 1e-2, 1, &sin_forcing(&g)).unwrap();
        assert_eq!(audit.rows.len(), 13);
        assert_eq!(audit.failed_points, 0);
        for row in &audit.rows {
            assert!(row.ratio.is_finite() && row.ratio >= 0.0);
            assert!(row.lhs >= 0.0 && row.rhs > 0.0);
        }
        // zero forcing: all ratios zero
        let z = Array1::from_elem(g.n, Complex64::ZERO);
        let audit0 = estimate_audit(&g, &p, 1e-2, 1, &z).unwrap();
        assert!(audit0.rows.iter().all(|r| r.ratio == 0.0));
    }

    #[test]
    fn couette_profile_is_accepted_by_solves() {
        let g = build_grid(65).unwrap();
        let p = couette(&g);
        let problem = ResolventProblem::new(&g, 1e-3, 1, 0.5, &p, sin_forcing(&g)).unwrap();
        assert!(solve_navier_slip(&g, &problem).is_ok());
        let _ = profile_unchecked(&g, &g.nodes.to_owned());
    }
}
