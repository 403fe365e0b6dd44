//! Batch experiment driver: manifest parsing, sweep orchestration with a
//! bounded worker pool, CSV artifacts, and the log-log scaling fits used by
//! the acceptance checks. All randomness comes from ChaCha8 seeded by the
//! manifest, so reruns are byte-identical apart from the timestamp header.

use ndarray::Array1;
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::base_flow::{self, ShearProfile};
use crate::error::{Error, Result};
use crate::grid::{self, build_grid, ChannelGrid};
use crate::nonlinear;
use crate::resolvent;
use crate::semigroup::{self, BaseTrajectory, ForcingSlots, ModeState, StepOptions};
use crate::EPSILON_0;

/// The experiments the driver knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    ResolventAudit,
    RhoIdentity,
    DecayRates,
    SlabDecomposition,
    Threshold,
    AppendixLemmas,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ResolventAudit => "resolvent_audit",
            Self::RhoIdentity => "rho_identity",
            Self::DecayRates => "decay_rates",
            Self::SlabDecomposition => "slab_decomposition",
            Self::Threshold => "threshold",
            Self::AppendixLemmas => "appendix_lemmas",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "resolvent_audit" => Ok(Self::ResolventAudit),
            "rho_identity" => Ok(Self::RhoIdentity),
            "decay_rates" => Ok(Self::DecayRates),
            "slab_decomposition" => Ok(Self::SlabDecomposition),
            "threshold" => Ok(Self::Threshold),
            "appendix_lemmas" => Ok(Self::AppendixLemmas),
            other => Err(Error::Validation(format!("unknown experiment '{other}'"))),
        }
    }
}

/// Base-flow selector.
#[derive(Debug, Clone)]
pub enum ProfileKind {
    /// U = y.
    Couette,
    /// U = y - a sin(pi y).
    Sine(f64),
    /// U = y + a y^2.
    Quadratic(f64),
    /// Two-column (y, U) text file resampled onto the grid.
    File(PathBuf),
}

impl ProfileKind {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "couette" {
            return Ok(Self::Couette);
        }
        if let Some(rest) = s.strip_prefix("sine:") {
            return rest
                .parse()
                .map(Self::Sine)
                .map_err(|_| Error::Validation(format!("bad sine amplitude '{rest}'")));
        }
        if let Some(rest) = s.strip_prefix("quad:") {
            return rest
                .parse()
                .map(Self::Quadratic)
                .map_err(|_| Error::Validation(format!("bad quadratic amplitude '{rest}'")));
        }
        if let Some(rest) = s.strip_prefix("file:") {
            return Ok(Self::File(PathBuf::from(rest)));
        }
        Err(Error::Validation(format!("unknown profile '{s}'")))
    }

    pub fn label(&self) -> String {
        match self {
            Self::Couette => "couette".into(),
            Self::Sine(a) => format!("sine:{a}"),
            Self::Quadratic(a) => format!("quad:{a}"),
            Self::File(p) => format!("file:{}", p.display()),
        }
    }

    pub fn build(&self, grid: &ChannelGrid, endpoint_flat: bool) -> Result<ShearProfile> {
        match self {
            Self::Couette => Ok(base_flow::couette(grid)),
            Self::Sine(a) => {
                let u = grid.nodes.mapv(|y| y - a * (PI * y).sin());
                base_flow::validate_profile(grid, &u, endpoint_flat)
            }
            Self::Quadratic(a) => {
                let u = grid.nodes.mapv(|y| y + a * y * y);
                base_flow::validate_profile(grid, &u, false)
            }
            Self::File(p) => {
                let samples = base_flow::load_profile_samples(p, grid)?;
                base_flow::validate_profile(grid, &samples, endpoint_flat)
            }
        }
    }
}

/// Parsed experiment manifest.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub nu_list: Vec<f64>,
    pub k_list: Vec<i32>,
    pub n_grid: Option<usize>,
    pub k_max: usize,
    pub seed: u64,
    pub t_end: Option<f64>,
    pub epsilon: Option<f64>,
    pub c_u: f64,
    pub c_theta: f64,
    pub profile: ProfileKind,
    pub out_dir: Option<PathBuf>,
}

impl Manifest {
    pub fn defaults(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            nu_list: vec![1e-3, 1e-4],
            k_list: vec![1],
            n_grid: None,
            k_max: 8,
            seed: 0,
            t_end: None,
            epsilon: None,
            c_u: 0.1,
            c_theta: 0.1,
            profile: match experiment {
                ExperimentKind::ResolventAudit => ProfileKind::Quadratic(0.1),
                _ => ProfileKind::Couette,
            },
            out_dir: None,
        }
    }

    /// Parse a key = value manifest ('#' comments, comma-separated lists).
    pub fn parse(text: &str, fallback_experiment: Option<ExperimentKind>) -> Result<Self> {
        let mut experiment = fallback_experiment;
        let mut kv = std::collections::BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Validation(format!(
                    "manifest line {}: expected key = value",
                    lineno + 1
                ))
            })?;
            kv.insert(key.trim().to_string(), value.trim().to_string());
        }
        if let Some(e) = kv.get("experiment") {
            let parsed = ExperimentKind::parse(e)?;
            if let Some(fb) = fallback_experiment {
                if fb != parsed {
                    return Err(Error::Validation(format!(
                        "manifest experiment '{}' does not match subcommand '{}'",
                        parsed.name(),
                        fb.name()
                    )));
                }
            }
            experiment = Some(parsed);
        }
        let experiment = experiment
            .ok_or_else(|| Error::Validation("no experiment named in manifest or CLI".into()))?;
        let mut m = Self::defaults(experiment);
        let parse_f64 = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Validation(format!("bad number '{s}'")))
        };
        if let Some(v) = kv.get("nu") {
            m.nu_list = v
                .split(',')
                .map(|p| parse_f64(p.trim()))
                .collect::<Result<Vec<_>>>()?;
        }
        if let Some(v) = kv.get("k") {
            m.k_list = v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| Error::Validation(format!("bad wavenumber '{p}'")))
                })
                .collect::<Result<Vec<_>>>()?;
        }
        if let Some(v) = kv.get("n") {
            m.n_grid = Some(
                v.parse()
                    .map_err(|_| Error::Validation(format!("bad grid size '{v}'")))?,
            );
        }
        if let Some(v) = kv.get("K") {
            m.k_max = v
                .parse()
                .map_err(|_| Error::Validation(format!("bad K '{v}'")))?;
        }
        if let Some(v) = kv.get("seed") {
            m.seed = v
                .parse()
                .map_err(|_| Error::Validation(format!("bad seed '{v}'")))?;
        }
        if let Some(v) = kv.get("t_end") {
            m.t_end = Some(parse_f64(v)?);
        }
        if let Some(v) = kv.get("epsilon") {
            m.epsilon = Some(parse_f64(v)?);
        }
        if let Some(v) = kv.get("c_u") {
            m.c_u = parse_f64(v)?;
        }
        if let Some(v) = kv.get("c_theta") {
            m.c_theta = parse_f64(v)?;
        }
        if let Some(v) = kv.get("profile") {
            m.profile = ProfileKind::parse(v)?;
        }
        if let Some(v) = kv.get("out_dir") {
            m.out_dir = Some(PathBuf::from(v));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu_list.is_empty() {
            return Err(Error::Validation("nu list is empty".into()));
        }
        for &nu in &self.nu_list {
            if !(nu > 0.0 && nu <= 1.0) {
                return Err(Error::Validation(format!("nu = {nu} outside (0, 1]")));
            }
        }
        let needs_k = matches!(
            self.experiment,
            ExperimentKind::ResolventAudit
                | ExperimentKind::RhoIdentity
                | ExperimentKind::DecayRates
                | ExperimentKind::SlabDecomposition
        );
        if needs_k {
            if self.k_list.is_empty() {
                return Err(Error::Validation("k list is empty".into()));
            }
            if self.k_list.contains(&0) {
                return Err(Error::Validation("wavenumber 0 not allowed".into()));
            }
        }
        if self.experiment == ExperimentKind::Threshold && self.k_max == 0 {
            return Err(Error::Validation("threshold needs K >= 1".into()));
        }
        Ok(())
    }

    fn grid_for(&self, nu: f64) -> Result<ChannelGrid> {
        build_grid(self.n_grid.unwrap_or_else(|| grid::default_resolution(nu)))
    }
}

/// Ordinary least squares on (log x, log y) with a 95% confidence
/// half-width for the slope.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit);
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::DegenerateFit);
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit);
    }
    let sxy: f64 = lx
        .iter()
        .zip(ly.iter())
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(ly.iter())
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let df = points.len() - 2;
    let se = if df == 0 {
        0.0
    } else {
        (ssr / df as f64 / sxx).sqrt()
    };
    Ok((slope, intercept, t_quantile_975(df) * se))
}

/// Two-sided 95% Student t quantiles.
fn t_quantile_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
        2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
        2.052, 2.048, 2.045, 2.042,
    ];
    if df == 0 {
        f64::INFINITY
    } else if df <= 30 {
        TABLE[df - 1]
    } else {
        1.96
    }
}

/// Result of a driver run.
#[derive(Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub total_points: usize,
    pub failed_points: usize,
    pub failures: Vec<String>,
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let ts = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = String::new();
    let _ = writeln!(text, "# generated: {ts}");
    let _ = writeln!(text, "{header}");
    for row in rows {
        let _ = writeln!(text, "{row}");
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Run a sweep over points with a bounded pool, keeping input order.
fn sweep<P, R, F>(points: Vec<P>, workers: usize, f: F) -> Vec<std::result::Result<R, String>>
where
    P: Send + Sync,
    R: Send,
    F: Fn(&P) -> Result<R> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("worker pool");
    pool.install(|| {
        points
            .par_iter()
            .map(|p| f(p).map_err(|e| e.to_string()))
            .collect()
    })
}

/// Execute a manifest, writing CSV artifacts under `out`.
pub fn run(manifest: &Manifest, out: &Path, workers: usize) -> Result<RunReport> {
    manifest.validate()?;
    std::fs::create_dir_all(out)?;
    let probe = out.join(".write_probe");
    std::fs::write(&probe, b"ok")
        .map_err(|e| Error::Validation(format!("output directory not writable: {e}")))?;
    let _ = std::fs::remove_file(&probe);
    match manifest.experiment {
        ExperimentKind::ResolventAudit => run_resolvent_audit(manifest, out, workers),
        ExperimentKind::RhoIdentity => run_rho_identity(manifest, out, workers),
        ExperimentKind::DecayRates => run_decay_rates(manifest, out, workers),
        ExperimentKind::SlabDecomposition => run_slabs(manifest, out, workers),
        ExperimentKind::Threshold => run_threshold(manifest, out, workers),
        ExperimentKind::AppendixLemmas => run_appendix(manifest, out),
    }
}

fn run_resolvent_audit(manifest: &Manifest, out: &Path, workers: usize) -> Result<RunReport> {
    let mut points: Vec<(f64, i32)> = Vec::new();
    for &nu in &manifest.nu_list {
        for &k in &manifest.k_list {
            points.push((nu, k));
        }
    }
    let total = points.len();
    let results = sweep(points.clone(), workers, |&(nu, k)| {
        let grid = manifest.grid_for(nu)?;
        let profile = manifest.profile.build(&grid, false)?;
        let forcing = grid.nodes.mapv(|y| Complex64::new((PI * y).sin(), 0.0));
        resolvent::estimate_audit(&grid, &profile, nu, k, &forcing)
    });
    let mut rows = Vec::new();
    let mut raw_sup: Vec<((f64, i32), f64)> = Vec::new();
    let mut failures = Vec::new();
    for ((nu, k), res) in points.iter().zip(results) {
        match res {
            Ok(audit) => {
                for r in &audit.rows {
                    rows.push(format!(
                        "{},{},{},{},{},{},{}",
                        r.estimate_id,
                        fmt(r.nu),
                        r.k,
                        fmt(r.lambda_at_sup),
                        fmt(r.lhs),
                        fmt(r.rhs),
                        fmt(r.ratio)
                    ));
                    if r.estimate_id == "wL2.opnorm" {
                        let kf = (r.k.unsigned_abs()) as f64;
                        let sup = r.ratio / (r.nu.powf(1.0 / 3.0) * kf.powf(2.0 / 3.0));
                        raw_sup.push(((*nu, *k), sup));
                    }
                }
            }
            Err(e) => failures.push(format!("nu={nu} k={k}: {e}")),
        }
    }
    rows.sort();
    let audit_path = out.join("audit.csv");
    write_csv(
        &audit_path,
        "estimate_id,nu,k,lambda_at_sup,lhs,rhs,ratio",
        &rows,
    )?;

    // scaling fits of sup ||w_Na||/||F||: vs nu at each k, vs k at each nu
    let mut fit_rows = Vec::new();
    for &k in &manifest.k_list {
        let pts: Vec<(f64, f64)> = raw_sup
            .iter()
            .filter(|((_, kk), _)| *kk == k)
            .map(|((nu, _), v)| (*nu, *v))
            .collect();
        if let Ok((slope, intercept, ci)) = fit_exponent(&pts) {
            fit_rows.push(format!(
                "sup_wNa_over_F_vs_nu@k={k},{},{},{}",
                fmt(slope),
                fmt(intercept),
                fmt(ci)
            ));
        }
    }
    for &nu in &manifest.nu_list {
        let pts: Vec<(f64, f64)> = raw_sup
            .iter()
            .filter(|((nn, _), _)| *nn == nu)
            .map(|((_, k), v)| (k.unsigned_abs() as f64, *v))
            .collect();
        if let Ok((slope, intercept, ci)) = fit_exponent(&pts) {
            fit_rows.push(format!(
                "sup_wNa_over_F_vs_k@nu={nu:e},{},{},{}",
                fmt(slope),
                fmt(intercept),
                fmt(ci)
            ));
        }
    }
    fit_rows.sort();
    let summary_path = out.join("summary.csv");
    write_csv(
        &summary_path,
        "quantity,slope,intercept,ci95_halfwidth",
        &fit_rows,
    )?;
    Ok(RunReport {
        files: vec![audit_path, summary_path],
        total_points: total,
        failed_points: failures.len(),
        failures,
    })
}

fn run_rho_identity(manifest: &Manifest, out: &Path, workers: usize) -> Result<RunReport> {
    let mut points = Vec::new();
    for &nu in &manifest.nu_list {
        for &k in &manifest.k_list {
            points.push((nu, k));
        }
    }
    let total = points.len();
    let results = sweep(points.clone(), workers, |&(nu, k)| {
        resolvent::rho_integral_check(nu, k)
    });
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    let mut failures = Vec::new();
    for ((nu, k), res) in points.iter().zip(results) {
        match res {
            Ok(c) => {
                ratios.push(c.ratio);
                rows.push(format!(
                    "{},{},{},{},{},{},{}",
                    fmt(*nu),
                    k,
                    fmt(c.value),
                    fmt(c.ratio),
                    fmt(c.value_ramp),
                    fmt(c.ratio_ramp),
                    fmt(c.tail)
                ));
            }
            Err(e) => failures.push(format!("nu={nu} k={k}: {e}")),
        }
    }
    rows.sort();
    let path = out.join("rho.csv");
    write_csv(&path, "nu,k,value,ratio,value_ramp,ratio_ramp,tail", &rows)?;
    let spread = if ratios.is_empty() {
        f64::NAN
    } else {
        let mn = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        mx / mn - 1.0
    };
    let sum_path = out.join("summary.csv");
    write_csv(
        &sum_path,
        "quantity,value",
        &[format!("ratio_relative_spread,{}", fmt(spread))],
    )?;
    Ok(RunReport {
        files: vec![path, sum_path],
        total_points: total,
        failed_points: failures.len(),
        failures,
    })
}

/// One decay-rate measurement.
pub struct DecayPoint {
    pub nu: f64,
    pub k: i32,
    pub gamma: f64,
    pub gamma_over_nu13: f64,
    /// |k| ||e^{eps0 nu^{1/3} t} u||_{L2L2} / ||omega_in||_{L2}.
    pub u_damping: f64,
    pub series: Vec<(f64, f64)>,
}

/// Unforced linear evolution of omega_in = sin(pi y) to 10 nu^{-1/3} with
/// the heat-evolving base flow, rate fit over [2, 10] nu^{-1/3}.
pub fn decay_rate_point(
    grid: &ChannelGrid,
    profile: &ShearProfile,
    nu: f64,
    k: i32,
) -> Result<DecayPoint> {
    let omega_in = grid.nodes.mapv(|y| Complex64::new((PI * y).sin(), 0.0));
    let theta_in = Array1::from_elem(grid.n, Complex64::ZERO);
    let state = ModeState::from_vorticity(grid, k, omega_in, theta_in)?;
    let t_end = 10.0 * nu.powf(-1.0 / 3.0);
    let out = semigroup::evolve_and_measure(
        grid,
        &state,
        BaseTrajectory::HeatEvolving(profile),
        &ForcingSlots::none(),
        nu,
        t_end,
        EPSILON_0,
        StepOptions::default(),
        None,
    )?;
    let times: Vec<f64> = out.ledger.series.iter().map(|p| p.t).collect();
    // The enhanced-dissipation observable is the parabola-weighted
    // vorticity norm: the plain L2 norm saturates at the no-slip wall
    // vorticity sheet, which the weight vanishes on. The ledger series
    // carries the e^{eps nu^{1/3} t} factor; divide it back out.
    let rate = EPSILON_0 * nu.powf(1.0 / 3.0);
    let norms: Vec<f64> = out
        .ledger
        .series
        .iter()
        .map(|p| p.weighted_omega_parab * (-rate * p.t).exp())
        .collect();
    let gamma = semigroup::fit_decay_rate(&times, &norms, semigroup::decay_window(nu))?;
    let kf = k.unsigned_abs() as f64;
    let u_damping = kf * out.ledger.int_u_sq.sqrt() / out.ledger.omega_in_l2;
    Ok(DecayPoint {
        nu,
        k,
        gamma,
        gamma_over_nu13: gamma / nu.powf(1.0 / 3.0),
        u_damping,
        series: times.into_iter().zip(norms).collect(),
    })
}

fn run_decay_rates(manifest: &Manifest, out: &Path, workers: usize) -> Result<RunReport> {
    let mut points = Vec::new();
    for &nu in &manifest.nu_list {
        for &k in &manifest.k_list {
            points.push((nu, k));
        }
    }
    let total = points.len();
    let results = sweep(points.clone(), workers, |&(nu, k)| {
        let grid = manifest.grid_for(nu)?;
        let profile = manifest.profile.build(&grid, true)?;
        decay_rate_point(&grid, &profile, nu, k)
    });
    let mut rows = Vec::new();
    let mut fit_pts = Vec::new();
    let mut failures = Vec::new();
    let mut files = Vec::new();
    for ((nu, k), res) in points.iter().zip(results) {
        match res {
            Ok(p) => {
                rows.push(format!(
                    "{},{},{},{},{},{}",
                    fmt(p.nu),
                    p.k,
                    manifest.profile.label(),
                    fmt(p.gamma),
                    fmt(p.gamma_over_nu13),
                    fmt(p.u_damping)
                ));
                fit_pts.push((p.nu, p.gamma));
                let ts_path = out.join(format!("timeseries_nu{:.1e}_k{}.csv", nu, k));
                let ts_rows: Vec<String> = p
                    .series
                    .iter()
                    .map(|(t, v)| format!("{},{}", fmt(*t), fmt(*v)))
                    .collect();
                write_csv(&ts_path, "t,weighted_parab_omega", &ts_rows)?;
                files.push(ts_path);
            }
            Err(e) => failures.push(format!("nu={nu} k={k}: {e}")),
        }
    }
    rows.sort();
    let path = out.join("decay.csv");
    write_csv(&path, "nu,k,profile,gamma,gamma_over_nu13,u_damping", &rows)?;
    files.insert(0, path);
    let mut fit_rows = Vec::new();
    if let Ok((slope, intercept, ci)) = fit_exponent(&fit_pts) {
        fit_rows.push(format!(
            "gamma_vs_nu,{},{},{}",
            fmt(slope),
            fmt(intercept),
            fmt(ci)
        ));
    }
    let sum_path = out.join("summary.csv");
    write_csv(
        &sum_path,
        "quantity,slope,intercept,ci95_halfwidth",
        &fit_rows,
    )?;
    files.push(sum_path);
    Ok(RunReport {
        files,
        total_points: total,
        failed_points: failures.len(),
        failures,
    })
}

fn run_slabs(manifest: &Manifest, out: &Path, workers: usize) -> Result<RunReport> {
    let mut points = Vec::new();
    for &nu in &manifest.nu_list {
        for &k in &manifest.k_list {
            points.push((nu, k));
        }
    }
    let total = points.len();
    let results = sweep(points.clone(), workers, |&(nu, k)| {
        let grid = manifest.grid_for(nu)?;
        let profile = manifest.profile.build(&grid, true)?;
        let theta_in = grid.nodes.mapv(|y| Complex64::new((PI * y).sin(), 0.0));
        // forcing amplitudes at the natural scaling of the slab estimate
        let a1 = 0.1 * nu.powf(1.0 / 3.0);
        let a2 = 0.05 * nu.powf(2.0 / 3.0);
        let g1 = grid
            .nodes
            .mapv(|y| Complex64::new(a1 * (PI * y).sin(), 0.0));
        let g2 = grid
            .nodes
            .mapv(|y| Complex64::new(a2 * (2.0 * PI * y).sin(), 0.0));
        semigroup::frozen_time_decompose(&grid, &theta_in, &profile, Some(g1), Some(g2), nu, k, 6)
    });
    let mut slab_rows = Vec::new();
    let mut sum_rows = Vec::new();
    let mut failures = Vec::new();
    for ((nu, k), res) in points.iter().zip(results) {
        match res {
            Ok(d) => {
                for (j, hj) in d.h.iter().enumerate() {
                    slab_rows.push(format!("{},{},{},{}", fmt(*nu), k, j, fmt(*hj)));
                }
                sum_rows.push(format!(
                    "{},{},{},{},{},{}",
                    fmt(*nu),
                    k,
                    fmt(d.weighted_sum),
                    fmt(d.rhs),
                    fmt(d.ratio),
                    fmt(d.recon_error)
                ));
            }
            Err(e) => failures.push(format!("nu={nu} k={k}: {e}")),
        }
    }
    slab_rows.sort();
    sum_rows.sort();
    let slab_path = out.join("slab.csv");
    write_csv(&slab_path, "nu,k,j,h_j", &slab_rows)?;
    let sum_path = out.join("slab_summary.csv");
    write_csv(
        &sum_path,
        "nu,k,weighted_sum,rhs,ratio,recon_error",
        &sum_rows,
    )?;
    Ok(RunReport {
        files: vec![slab_path, sum_path],
        total_points: total,
        failed_points: failures.len(),
        failures,
    })
}

fn run_threshold(manifest: &Manifest, out: &Path, workers: usize) -> Result<RunReport> {
    let points: Vec<(usize, f64)> = manifest.nu_list.iter().cloned().enumerate().collect();
    let total = points.len();
    let results = sweep(points.clone(), workers, |&(idx, nu)| {
        let grid = manifest.grid_for(nu)?;
        let profile = manifest.profile.build(&grid, true)?;
        nonlinear::threshold_point(
            &grid,
            &profile,
            nu,
            manifest.c_u,
            manifest.c_theta,
            manifest.k_max,
            manifest.seed.wrapping_add(idx as u64),
            manifest.t_end,
        )
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((_, nu), res) in points.iter().zip(results) {
        match res {
            Ok(r) => rows.push(format!(
                "{},{},{},{},{},{},{},{}",
                fmt(r.nu),
                fmt(r.sum_e),
                fmt(r.sum_g),
                fmt(r.ratio_e),
                fmt(r.ratio_g),
                r.stayed_stable,
                fmt(r.sum_e_linear),
                fmt(r.sum_e_plain)
            )),
            Err(e) => failures.push(format!("nu={nu}: {e}")),
        }
    }
    rows.sort();
    let path = out.join("threshold.csv");
    write_csv(
        &path,
        "nu,sum_E,sum_G,ratio_E,ratio_G,stayed_stable,sum_E_linear,sum_E_plain_linf",
        &rows,
    )?;
    Ok(RunReport {
        files: vec![path],
        total_points: total,
        failed_points: failures.len(),
        failures,
    })
}

/// Wall-window norms: L2 norms of the four sinh/cosh windows, times |k|^{1/2}
/// (each should stay bounded: the windows decay like |k|^{-1/2}).
pub struct WindowNormRow {
    pub k: i32,
    pub function: &'static str,
    pub norm: f64,
    pub scaled: f64,
}

pub fn sinh_window_norms(grid: &ChannelGrid, ks: &[i32]) -> Vec<WindowNormRow> {
    let mut rows = Vec::new();
    for &k in ks {
        let kf = k as f64;
        type Window = Box<dyn Fn(f64) -> f64>;
        let fns: [(&'static str, Window); 4] = [
            (
                "sinh_k_1my",
                Box::new(move |y| (kf * (1.0 - y)).sinh() / kf.sinh()),
            ),
            ("sinh_ky", Box::new(move |y| (kf * y).sinh() / kf.sinh())),
            (
                "cosh_k_1my",
                Box::new(move |y| (kf * (1.0 - y)).cosh() / kf.sinh()),
            ),
            ("cosh_ky", Box::new(move |y| (kf * y).cosh() / kf.sinh())),
        ];
        for (name, f) in fns {
            let vals = grid.nodes.mapv(|y| Complex64::new(f(y), 0.0));
            let norm = grid.l2_norm(&vals);
            rows.push(WindowNormRow {
                k,
                function: name,
                norm,
                scaled: norm * kf.abs().sqrt(),
            });
        }
    }
    rows
}

/// Weighted velocity-gradient inequality: band-limited random omega, psi
/// the Dirichlet solve, u = (d_y psi, -ik psi); returns the worst ratio
/// ||sqrt(1-(2y-1)^2) d_y u||^2 / ||sqrt(1-(2y-1)^2) omega||^2 (<= 1).
pub fn weighted_gradient_trials(grid: &ChannelGrid, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let modes = (grid.n / 3).max(8);
    for trial in 0..trials {
        let k = 1 + (trial % 8) as i32;
        let mut omega = Array1::from_elem(grid.n, Complex64::ZERO);
        for m in 1..=modes {
            let amp = 1.0 / (1.0 + (m * m) as f64);
            let c = Complex64::new(
                amp * (2.0 * rng.random::<f64>() - 1.0),
                amp * (2.0 * rng.random::<f64>() - 1.0),
            );
            for (i, &y) in grid.nodes.iter().enumerate() {
                omega[i] += c * (m as f64 * PI * y).sin();
            }
        }
        let psi = grid::helmholtz_solve(grid, k, &omega)?;
        let dpsi = grid.apply_d1(&psi);
        let d2psi = grid.apply_d2(&psi);
        let kf = k as f64;
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for (i, &y) in grid.nodes.iter().enumerate() {
            let s2 = 4.0 * y * (1.0 - y);
            lhs += grid.quad_weights[i] * s2 * (d2psi[i].norm_sqr() + kf * kf * dpsi[i].norm_sqr());
            rhs += grid.quad_weights[i] * s2 * omega[i].norm_sqr();
        }
        worst = worst.max(lhs / rhs.max(1e-300));
    }
    Ok(worst)
}

/// Heat-flow Lipschitz-in-time sweep row.
pub struct HeatLipschitzRow {
    pub nu: f64,
    pub s: f64,
    pub t: f64,
    pub ratio: f64,
    pub limit_at_s: f64,
}

pub fn heat_lipschitz_sweep(
    grid: &ChannelGrid,
    profile: &ShearProfile,
    nu_list: &[f64],
) -> Result<Vec<HeatLipschitzRow>> {
    let mut rows = Vec::new();
    for &nu in nu_list {
        let tau = nu.powf(-1.0 / 3.0);
        for (s, t) in [(0.0, 1.0), (0.0, tau), (1.0, 2.0), (0.5 * tau, tau)] {
            let ratio = base_flow::heat_lipschitz_ratio(grid, profile, nu, t, s)?;
            let us = base_flow::heat_evolve(grid, profile, nu, s);
            let d2max = us.dy2.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            rows.push(HeatLipschitzRow {
                nu,
                s,
                t,
                ratio,
                limit_at_s: d2max / profile.sobolev_h4,
            });
        }
    }
    Ok(rows)
}

fn run_appendix(manifest: &Manifest, out: &Path) -> Result<RunReport> {
    let grid = build_grid(manifest.n_grid.unwrap_or(129))?;
    let mut rows = Vec::new();

    let a1 = sinh_window_norms(&grid, &[1, 2, 4, 8, 16, 32]);
    let fitted_c = a1.iter().fold(0.0f64, |a, r| a.max(r.scaled));
    for r in &a1 {
        rows.push(format!(
            "sinh_window,{},{},{},{}",
            r.k,
            r.function,
            fmt(r.norm),
            fmt(r.scaled)
        ));
    }
    rows.push(format!("sinh_window_fitted_C,,,{},", fmt(fitted_c)));

    let worst = weighted_gradient_trials(&grid, 200, manifest.seed)?;
    rows.push(format!("weighted_gradient_max_ratio,,,{},", fmt(worst)));

    let profile = match &manifest.profile {
        ProfileKind::Couette => base_flow::sine_perturbed(&grid, 0.05),
        other => other.build(&grid, true)?,
    };
    let a3 = heat_lipschitz_sweep(&grid, &profile, &manifest.nu_list)?;
    for r in &a3 {
        rows.push(format!(
            "heat_lipschitz,nu={:e} s={},t={},{},{}",
            r.nu,
            r.s,
            r.t,
            fmt(r.ratio),
            fmt(r.limit_at_s)
        ));
    }
    let path = out.join("lemmas.csv");
    write_csv(&path, "check,param1,param2,value,extra", &rows)?;
    Ok(RunReport {
        files: vec![path],
        total_points: 1,
        failed_points: 0,
        failures: Vec::new(),
    })
}
