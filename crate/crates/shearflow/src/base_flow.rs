//! Monotone base shear flow: admissibility validation and heat-equation
//! evolution with pinned wall values.

use ndarray::{Array1, Array2};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{barycentric_interpolate, ChannelGrid};
use crate::linalg::RealLu;

/// Validated base-flow profile with cached derivatives.
#[derive(Debug, Clone)]
pub struct ShearProfile {
    /// U at the grid nodes.
    pub values: Array1<f64>,
    /// dU/dy.
    pub dy: Array1<f64>,
    /// d2U/dy2.
    pub dy2: Array1<f64>,
    /// Monotonicity floor min(dU/dy).
    pub c0: f64,
    /// +1 for U'' >= 0, -1 for U'' <= 0, 0 for no curvature within
    /// tolerance (Couette) or no definite sign after evolution.
    pub concavity_sign: i8,
    /// Discrete H^4 norm of the profile.
    pub sobolev_h4: f64,
}

impl ShearProfile {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn max_slope(&self) -> f64 {
        self.dy.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Round-off floor for second derivatives of O(1) data on this grid:
/// eps times the largest row 1-norm of D2.
fn curvature_floor(grid: &ChannelGrid, scale: f64) -> f64 {
    let row1: f64 = (0..grid.n).map(|j| grid.d2[[1, j]].abs()).sum();
    4.0 * f64::EPSILON * row1 * scale.max(1.0)
}

fn classify_concavity(dy2: &Array1<f64>, tol: f64) -> Result<i8> {
    let min2 = dy2.iter().cloned().fold(f64::INFINITY, f64::min);
    let max2 = dy2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let amp = max2.abs().max(min2.abs());
    if amp <= tol {
        Ok(0)
    } else if min2 >= -tol {
        Ok(1)
    } else if max2 <= tol {
        Ok(-1)
    } else {
        Err(Error::MixedConcavity)
    }
}

fn build_fields(grid: &ChannelGrid, values: Array1<f64>, concavity_sign: i8) -> ShearProfile {
    let dy = grid.apply_d1_real(&values);
    let dy2 = grid.apply_d2_real(&values);
    let d3 = grid.apply_d1_real(&dy2);
    let d4 = grid.apply_d2_real(&dy2);
    let sq = |f: &Array1<f64>| grid.integrate(&f.mapv(|v| v * v));
    let sobolev_h4 = (sq(&values) + sq(&dy) + sq(&dy2) + sq(&d3) + sq(&d4)).sqrt();
    let c0 = dy.iter().cloned().fold(f64::INFINITY, f64::min);
    ShearProfile {
        values,
        dy,
        dy2,
        c0,
        concavity_sign,
        sobolev_h4,
    }
}

/// Validate nodal samples as an admissible monotone shear profile.
///
/// `require_endpoint_flat` additionally demands U''(0) = U''(1) = 0, the
/// condition used for base flows of nonlinear runs.
pub fn validate_profile(
    grid: &ChannelGrid,
    samples: &Array1<f64>,
    require_endpoint_flat: bool,
) -> Result<ShearProfile> {
    grid.check_len(samples.len())?;
    let dy = grid.apply_d1_real(samples);
    let c0 = dy.iter().cloned().fold(f64::INFINITY, f64::min);
    if c0 <= 0.0 {
        return Err(Error::NotMonotone(c0));
    }
    let dy2 = grid.apply_d2_real(samples);
    let scale = samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = curvature_floor(grid, scale);
    let sign = classify_concavity(&dy2, 1e-10f64.max(floor))?;
    if require_endpoint_flat {
        let worst = dy2[0].abs().max(dy2[grid.n - 1].abs());
        if worst > 1e-8f64.max(floor) {
            return Err(Error::EndpointCurvatureNonzero(worst));
        }
    }
    Ok(build_fields(grid, samples.clone(), sign))
}

/// Evolve the base flow by d_t U = nu d_y^2 U with the wall values held at
/// their initial data, using Crank-Nicolson steps of size nu^{-1/3}/200.
/// Unconditionally stable; ||d_y U||_{L2} is nonincreasing.
pub fn heat_evolve(grid: &ChannelGrid, profile: &ShearProfile, nu: f64, t: f64) -> ShearProfile {
    assert!(t >= 0.0, "time must be nonnegative");
    assert!(nu > 0.0, "viscosity must be positive");
    if t == 0.0 {
        return profile.clone();
    }
    let dt_target = nu.powf(-1.0 / 3.0) / 200.0;
    let nsteps = (t / dt_target).ceil().max(1.0) as usize;
    let stepper = HeatStepper::new(grid, nu, t / nsteps as f64);
    let mut u = profile.values.clone();
    for _ in 0..nsteps {
        u = stepper.step(&u);
    }
    rebuild_evolved(grid, u)
}

fn rebuild_evolved(grid: &ChannelGrid, u: Array1<f64>) -> ShearProfile {
    let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let dy2 = grid.apply_d2_real(&u);
    let sign = classify_concavity(&dy2, 1e-10f64.max(curvature_floor(grid, scale))).unwrap_or(0);
    build_fields(grid, u, sign)
}

/// Prefactored Crank-Nicolson heat step with pinned wall rows. Used both
/// by `heat_evolve` and by the evolution drivers that advance the base
/// flow alongside a perturbation.
pub struct HeatStepper {
    lu: RealLu,
    b: Array2<f64>,
    n: usize,
}

impl HeatStepper {
    pub fn new(grid: &ChannelGrid, nu: f64, dt: f64) -> Self {
        let n = grid.n;
        let c = 0.5 * nu * dt;
        let mut a = grid.d2.mapv(|v| -c * v);
        let mut b = grid.d2.mapv(|v| c * v);
        for i in 0..n {
            a[[i, i]] += 1.0;
            b[[i, i]] += 1.0;
        }
        for j in 0..n {
            a[[0, j]] = 0.0;
            a[[n - 1, j]] = 0.0;
            b[[0, j]] = 0.0;
            b[[n - 1, j]] = 0.0;
        }
        a[[0, 0]] = 1.0;
        a[[n - 1, n - 1]] = 1.0;
        b[[0, 0]] = 1.0;
        b[[n - 1, n - 1]] = 1.0;
        let lu = RealLu::new(&a).expect("heat operator is nonsingular");
        Self { lu, b, n }
    }

    pub fn step(&self, u: &Array1<f64>) -> Array1<f64> {
        assert_eq!(u.len(), self.n);
        let rhs = self.b.dot(u);
        self.lu.solve(&rhs)
    }

    /// Rebuild a full profile from evolved nodal values.
    pub fn profile_from_values(&self, grid: &ChannelGrid, u: Array1<f64>) -> ShearProfile {
        rebuild_evolved(grid, u)
    }
}

/// Ratio ||U(t) - U(s)||_inf / (nu (t - s) ||U_in||_{H^4}) probing the
/// Lipschitz-in-time bound of the heat flow.
pub fn heat_lipschitz_ratio(
    grid: &ChannelGrid,
    profile: &ShearProfile,
    nu: f64,
    t: f64,
    s: f64,
) -> Result<f64> {
    if t == s {
        return Err(Error::DivisionDegenerate);
    }
    assert!(s >= 0.0 && t > s, "need 0 <= s < t");
    let us = heat_evolve(grid, profile, nu, s);
    let ut = heat_evolve(grid, profile, nu, t);
    let sup = us
        .values
        .iter()
        .zip(ut.values.iter())
        .fold(0.0f64, |a, (&x, &y)| a.max((y - x).abs()));
    Ok(sup / (nu * (t - s) * profile.sobolev_h4))
}

/// Load a two-column (y, U) text file and resample onto the grid by
/// polynomial interpolation. Lines starting with '#' are skipped; columns
/// may be separated by whitespace or commas.
pub fn load_profile_samples<P: AsRef<Path>>(path: P, grid: &ChannelGrid) -> Result<Array1<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line
            .split(|ch: char| ch.is_whitespace() || ch == ',')
            .filter(|s| !s.is_empty());
        let (sy, su) = match (parts.next(), parts.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Validation(format!(
                    "profile file line {}: expected two columns",
                    lineno + 1
                )))
            }
        };
        let y: f64 = sy.parse().map_err(|_| {
            Error::Validation(format!("profile file line {}: bad y value", lineno + 1))
        })?;
        let u: f64 = su.parse().map_err(|_| {
            Error::Validation(format!("profile file line {}: bad U value", lineno + 1))
        })?;
        xs.push(y);
        ys.push(u);
    }
    if xs.len() < 2 {
        return Err(Error::Validation(
            "profile file needs at least two rows".into(),
        ));
    }
    let eval: Vec<f64> = grid.nodes.to_vec();
    Ok(Array1::from_vec(barycentric_interpolate(&xs, &ys, &eval)))
}

/// Build a profile from nodal samples without the admissibility gate.
/// Heat evolution is well-defined for any data; only resolvent and
/// nonlinear runs insist on `validate_profile`.
pub fn profile_unchecked(grid: &ChannelGrid, samples: &Array1<f64>) -> ShearProfile {
    grid.check_len(samples.len()).expect("sample length");
    rebuild_evolved(grid, samples.clone())
}

/// Couette profile U = y.
pub fn couette(grid: &ChannelGrid) -> ShearProfile {
    validate_profile(grid, &grid.nodes.to_owned(), true).expect("Couette is admissible")
}

/// U(y) = y - a sin(pi y); monotone with one-signed curvature and flat
/// endpoint curvature for 0 < a < 1/pi.
pub fn sine_perturbed(grid: &ChannelGrid, a: f64) -> ShearProfile {
    let u = grid
        .nodes
        .mapv(|y| y - a * (std::f64::consts::PI * y).sin());
    validate_profile(grid, &u, true).expect("profile is admissible")
}
