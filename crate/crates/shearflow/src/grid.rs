//! 1D spectral discretization of the channel cross-section [0, 1]:
//! Chebyshev-Gauss-Lobatto nodes, differentiation matrices, Clenshaw-Curtis
//! quadrature, Dirichlet Helmholtz solves and the norms used by the
//! stability estimates.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::RealLu;

/// Minimum node count accepted by [`build_grid`].
pub const MIN_NODES: usize = 16;

/// Collocation grid on [0, 1] with dense derivative operators and
/// quadrature weights summing to one.
#[derive(Debug, Clone)]
pub struct ChannelGrid {
    /// Node count.
    pub n: usize,
    /// Strictly increasing nodes, `nodes[0] = 0`, `nodes[n-1] = 1`.
    pub nodes: Array1<f64>,
    /// First-derivative matrix acting on nodal values.
    pub d1: Array2<f64>,
    /// Second-derivative matrix acting on nodal values.
    pub d2: Array2<f64>,
    /// Clenshaw-Curtis weights for the integral over [0, 1].
    pub quad_weights: Array1<f64>,
}

/// Norm selector. Wavenumber-dependent norms carry their own `k` (and the
/// rho-weighted norm its viscosity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L2,
    /// ||(d_y, k) f||_{L2}
    H1k {
        k: i32,
    },
    /// Dual norm of H^1_{k,0}, evaluated through the elliptic solve
    /// <(-d_y^2 + k^2)^{-1} f, f>^{1/2} in its discrete weak form.
    H1kDual {
        k: i32,
    },
    /// Weight sqrt(1 - (2y-1)^2).
    WeightedParabola,
    /// Weight rho_k^{1/2} with the piecewise-linear boundary-layer cutoff.
    WeightedRho {
        nu: f64,
        k: i32,
    },
}

/// Default resolution rule: 129 nodes down to nu = 1e-5, 257 below.
pub fn default_resolution(nu: f64) -> usize {
    if nu >= 1e-5 {
        129
    } else {
        257
    }
}

/// Build the Chebyshev-Gauss-Lobatto grid mapped to [0, 1].
///
/// Differentiation matrices follow the trigonometric form with the
/// flipping trick and the negative-sum diagonal, which keeps the
/// round-off on low-degree polynomials near machine precision even at
/// several hundred nodes.
pub fn build_grid(n: usize) -> Result<ChannelGrid> {
    if n < MIN_NODES {
        return Err(Error::GridTooCoarse(n));
    }
    let m = n - 1; // polynomial order
    let mf = m as f64;

    // Nodes: y_j = sin^2(j pi / (2m)) is exact at both endpoints and
    // monotone increasing.
    let nodes = Array1::from_iter((0..n).map(|j| {
        let s = (j as f64 * PI / (2.0 * mf)).sin();
        s * s
    }));

    // Pairwise differences x_k - x_j of the standard nodes x = cos(j pi/m),
    // by trig identity, with the flipping trick for the lower half.
    let mut dx = Array2::<f64>::zeros((n, n));
    let half = m / 2;
    for k in 0..=half {
        for j in 0..n {
            if j == k {
                continue;
            }
            let a = ((k + j) as f64) * PI / (2.0 * mf);
            let b = ((j as f64) - (k as f64)) * PI / (2.0 * mf);
            dx[[k, j]] = 2.0 * a.sin() * b.sin();
        }
    }
    for k in half + 1..n {
        for j in 0..n {
            if j == k {
                continue;
            }
            dx[[k, j]] = -dx[[m - k, m - j]];
        }
    }

    // c_k = (-1)^k * (2 at endpoints, 1 inside)
    let c: Vec<f64> = (0..n)
        .map(|k| {
            let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
            let endpoint = if k == 0 || k == m { 2.0 } else { 1.0 };
            sign * endpoint
        })
        .collect();

    // Negative-sum-trick diagonals with compensated summation in natural
    // index order (matching the order of later mat-vec products).
    let nst = |row: &[f64]| -> f64 {
        let mut s = 0.0f64;
        let mut comp = 0.0f64;
        for &v in row {
            let y = v - comp;
            let t = s + y;
            comp = (t - s) - y;
            s = t;
        }
        -s
    };

    let mut d1x = Array2::<f64>::zeros((n, n));
    let mut row = vec![0.0f64; n - 1];
    for k in 0..n {
        let mut idx = 0;
        for j in 0..n {
            if j != k {
                let v = (c[k] / c[j]) / dx[[k, j]];
                d1x[[k, j]] = v;
                row[idx] = v;
                idx += 1;
            }
        }
        d1x[[k, k]] = nst(&row);
    }

    // D2 off-diagonals from the explicit cancellation-free trigonometric
    // form of the Chebyshev second-derivative entries; upper half computed,
    // lower half by the centro-symmetry D2[k][j] = D2[m-k][m-j].
    let chat = |j: usize| if j == 0 || j == m { 2.0 } else { 1.0 };
    let sgn = |t: usize| if t.is_multiple_of(2) { 1.0 } else { -1.0 };
    let sfun = |t: f64| (t * PI / (2.0 * mf)).sin();
    let mut d2x = Array2::<f64>::zeros((n, n));
    for j in 1..n {
        // wall row k = 0: (2/3) (-1)^j / chat_j ((2m^2+1)(1-x_j) - 6)/(1-x_j)^2
        let omx = 2.0 * sfun(j as f64).powi(2);
        d2x[[0, j]] =
            (2.0 / 3.0) * sgn(j) / chat(j) * (((2 * m * m + 1) as f64) * omx - 6.0) / (omx * omx);
    }
    for k in 1..=half {
        let sk2 = (k as f64 * PI / mf).sin().powi(2);
        for j in 0..n {
            if j == k {
                continue;
            }
            let num = sk2 + sfun(k as f64 - j as f64).powi(2) + sfun((k + j) as f64).powi(2);
            d2x[[k, j]] = -sgn(k + j) / chat(j) * num / (sk2 * dx[[k, j]] * dx[[k, j]]);
        }
    }
    for k in half + 1..n {
        for j in 0..n {
            if j != k {
                d2x[[k, j]] = d2x[[m - k, m - j]];
            }
        }
    }
    for k in 0..n {
        let mut idx = 0;
        for j in 0..n {
            if j != k {
                row[idx] = d2x[[k, j]];
                idx += 1;
            }
        }
        d2x[[k, k]] = nst(&row);
    }

    // Map x in [-1,1] -> y = (1-x)/2: d/dy = -2 d/dx.
    let d1 = d1x.mapv(|v| -2.0 * v);
    let d2 = d2x.mapv(|v| 4.0 * v);

    // Clenshaw-Curtis weights on [-1, 1], halved for [0, 1].
    let mut w = Array1::<f64>::zeros(n);
    let endpoint_even = m.is_multiple_of(2);
    let endpoint = if endpoint_even {
        1.0 / ((m * m - 1) as f64)
    } else {
        1.0 / ((m * m) as f64)
    };
    w[0] = endpoint;
    w[m] = endpoint;
    for (j, wj) in w.iter_mut().enumerate().take(m).skip(1) {
        let theta = j as f64 * PI / mf;
        let mut v = 1.0;
        for s in 1..=(m / 2) {
            let b = if 2 * s == m { 1.0 } else { 2.0 };
            v -= b * (2.0 * s as f64 * theta).cos() / ((4 * s * s - 1) as f64);
        }
        *wj = 2.0 * v / mf;
    }
    let quad_weights = w.mapv(|v| 0.5 * v);

    Ok(ChannelGrid {
        n,
        nodes,
        d1,
        d2,
        quad_weights,
    })
}

impl ChannelGrid {
    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    /// Quadrature of a real nodal field.
    pub fn integrate(&self, f: &Array1<f64>) -> f64 {
        self.quad_weights
            .iter()
            .zip(f.iter())
            .map(|(&w, &v)| w * v)
            .sum()
    }

    /// Weighted inner product sum_i w_i f_i conj(g_i).
    pub fn inner(&self, f: &Array1<Complex64>, g: &Array1<Complex64>) -> Complex64 {
        self.quad_weights
            .iter()
            .zip(f.iter().zip(g.iter()))
            .map(|(&w, (&a, &b))| w * a * b.conj())
            .sum()
    }

    /// L2 norm of a complex nodal field.
    pub fn l2_norm(&self, f: &Array1<Complex64>) -> f64 {
        self.weighted_l2_norm_sq(f, |_| 1.0).sqrt()
    }

    /// L2 norm against an extra pointwise weight `wt(i)` multiplying |f_i|^2.
    fn weighted_l2_norm_sq<W: Fn(usize) -> f64>(&self, f: &Array1<Complex64>, wt: W) -> f64 {
        self.quad_weights
            .iter()
            .enumerate()
            .zip(f.iter())
            .map(|((i, &w), &v)| w * wt(i) * v.norm_sqr())
            .sum::<f64>()
            .max(0.0)
    }

    /// Differentiate a nodal field. Evaluated in the difference form
    /// sum_j D[k][j] (f_j - f_k), which avoids the large-entry round-off
    /// of a plain mat-vec in the wall-adjacent rows.
    pub fn apply_d1(&self, f: &Array1<Complex64>) -> Array1<Complex64> {
        apply_diff_form_complex(&self.d1, f)
    }

    pub fn apply_d2(&self, f: &Array1<Complex64>) -> Array1<Complex64> {
        apply_diff_form_complex(&self.d2, f)
    }

    pub fn apply_d1_real(&self, f: &Array1<f64>) -> Array1<f64> {
        apply_diff_form_real(&self.d1, f)
    }

    pub fn apply_d2_real(&self, f: &Array1<f64>) -> Array1<f64> {
        apply_diff_form_real(&self.d2, f)
    }

    /// L1 norm of |f| by quadrature.
    pub fn l1_norm(&self, f: &Array1<Complex64>) -> f64 {
        self.quad_weights
            .iter()
            .zip(f.iter())
            .map(|(&w, &v)| w * v.norm())
            .sum()
    }
}

fn apply_diff_form_real(d: &Array2<f64>, f: &Array1<f64>) -> Array1<f64> {
    let n = d.nrows();
    assert_eq!(f.len(), n);
    let mut out = Array1::zeros(n);
    for k in 0..n {
        let fk = f[k];
        let row = d.row(k);
        let mut s = 0.0;
        for j in 0..n {
            if j != k {
                s += row[j] * (f[j] - fk);
            }
        }
        out[k] = s;
    }
    out
}

fn apply_diff_form_complex(d: &Array2<f64>, f: &Array1<Complex64>) -> Array1<Complex64> {
    let n = d.nrows();
    assert_eq!(f.len(), n);
    let mut out = Array1::from_elem(n, Complex64::ZERO);
    for k in 0..n {
        let fk = f[k];
        let row = d.row(k);
        let mut sre = 0.0;
        let mut sim = 0.0;
        for j in 0..n {
            if j != k {
                let dkj = row[j];
                sre += dkj * (f[j].re - fk.re);
                sim += dkj * (f[j].im - fk.im);
            }
        }
        out[k] = Complex64::new(sre, sim);
    }
    out
}

/// Piecewise-linear boundary-layer weight rho_k at the grid nodes:
/// linear ramps of width nu^{1/3} |k|^{-1/3} at each wall, 1 inside.
pub fn rho_values(grid: &ChannelGrid, nu: f64, k: i32) -> Result<Array1<f64>> {
    if k == 0 {
        return Err(Error::InvalidWavenumber);
    }
    let width = nu.powf(1.0 / 3.0) * (k.unsigned_abs() as f64).powf(-1.0 / 3.0);
    if width >= 0.5 {
        return Err(Error::LayerTooWide(width));
    }
    Ok(grid.nodes.mapv(|y| {
        if y <= width {
            y / width
        } else if y >= 1.0 - width {
            (1.0 - y) / width
        } else {
            1.0
        }
    }))
}

/// Dirichlet Helmholtz solve: (d_y^2 - k^2) psi = rhs on interior nodes,
/// psi(0) = psi(1) = 0.
pub fn helmholtz_solve(
    grid: &ChannelGrid,
    k: i32,
    rhs: &Array1<Complex64>,
) -> Result<Array1<Complex64>> {
    grid.check_len(rhs.len())?;
    let lu = helmholtz_lu(grid, k)?;
    Ok(helmholtz_apply(grid, &lu, rhs))
}

/// Factor the bordered Dirichlet Helmholtz operator once for repeated solves.
pub fn helmholtz_lu(grid: &ChannelGrid, k: i32) -> Result<RealLu> {
    let n = grid.n;
    let k2 = (k as f64) * (k as f64);
    let mut a = grid.d2.clone();
    for i in 0..n {
        a[[i, i]] -= k2;
    }
    for j in 0..n {
        a[[0, j]] = 0.0;
        a[[n - 1, j]] = 0.0;
    }
    a[[0, 0]] = 1.0;
    a[[n - 1, n - 1]] = 1.0;
    RealLu::new(&a)
}

/// Apply a prefactored Helmholtz solve; boundary rows of the RHS are
/// replaced by the homogeneous Dirichlet data.
pub fn helmholtz_apply(
    grid: &ChannelGrid,
    lu: &RealLu,
    rhs: &Array1<Complex64>,
) -> Array1<Complex64> {
    let n = grid.n;
    let mut b = rhs.clone();
    b[0] = Complex64::ZERO;
    b[n - 1] = Complex64::ZERO;
    lu.solve_complex(&b)
}

/// Evaluate one of the estimate norms.
pub fn norm(grid: &ChannelGrid, kind: NormKind, f: &Array1<Complex64>) -> Result<f64> {
    grid.check_len(f.len())?;
    match kind {
        NormKind::L2 => Ok(grid.l2_norm(f)),
        NormKind::H1k { k } => {
            let df = grid.apply_d1(f);
            let k2 = (k as f64) * (k as f64);
            Ok((grid.l2_norm(&df).powi(2) + k2 * grid.l2_norm(f).powi(2)).sqrt())
        }
        NormKind::H1kDual { k } => dual_norm(grid, k, f),
        NormKind::WeightedParabola => {
            let y = &grid.nodes;
            Ok(grid
                .weighted_l2_norm_sq(f, |i| 4.0 * y[i] * (1.0 - y[i]))
                .sqrt())
        }
        NormKind::WeightedRho { nu, k } => {
            let rho = rho_values(grid, nu, k)?;
            Ok(grid.weighted_l2_norm_sq(f, |i| rho[i]).sqrt())
        }
    }
}

/// H^{-1}_k dual norm: sup over H^1_{k,0} test functions of |<f, g>| with
/// ||g||_{H^1_k} = 1, attained at the weak elliptic solution. With
/// W = diag(quad_weights) and A the interior block of D1^T W D1 + k^2 W,
/// the square of the norm is (W f)^H A^{-1} (W f), and Cauchy-Schwarz in
/// the A inner product makes the duality sandwich exact at the discrete
/// level.
fn dual_norm(grid: &ChannelGrid, k: i32, f: &Array1<Complex64>) -> Result<f64> {
    let n = grid.n;
    let ni = n - 2;
    let k2 = (k as f64) * (k as f64);
    let w = &grid.quad_weights;

    let mut a = Array2::<f64>::zeros((ni, ni));
    for (r, row) in a.rows_mut().into_iter().enumerate() {
        let i = r + 1;
        let mut row = row;
        for (c, dst) in row.iter_mut().enumerate() {
            let j = c + 1;
            let mut s = 0.0;
            for l in 0..n {
                s += grid.d1[[l, i]] * w[l] * grid.d1[[l, j]];
            }
            if i == j {
                s += k2 * w[i];
            }
            *dst = s;
        }
    }
    let lu = RealLu::new(&a)?;
    let rhs = Array1::from_iter((1..n - 1).map(|i| f[i] * w[i]));
    let g = lu.solve_complex(&rhs);
    let val: Complex64 = rhs
        .iter()
        .zip(g.iter())
        .map(|(&r, &gi)| r.conj() * gi)
        .sum();
    Ok(val.re.max(0.0).sqrt())
}

/// The discrete maximizer used by the dual norm: the weak elliptic solution
/// extended by zero to the walls. Needed by tests checking attainment.
pub fn dual_norm_maximizer(
    grid: &ChannelGrid,
    k: i32,
    f: &Array1<Complex64>,
) -> Result<Array1<Complex64>> {
    grid.check_len(f.len())?;
    let n = grid.n;
    let ni = n - 2;
    let k2 = (k as f64) * (k as f64);
    let w = &grid.quad_weights;
    let mut a = Array2::<f64>::zeros((ni, ni));
    for r in 0..ni {
        let i = r + 1;
        for c in 0..ni {
            let j = c + 1;
            let mut s = 0.0;
            for l in 0..n {
                s += grid.d1[[l, i]] * w[l] * grid.d1[[l, j]];
            }
            if i == j {
                s += k2 * w[i];
            }
            a[[r, c]] = s;
        }
    }
    let lu = RealLu::new(&a)?;
    let rhs = Array1::from_iter((1..n - 1).map(|i| f[i] * w[i]));
    let g = lu.solve_complex(&rhs);
    let mut out = Array1::from_elem(n, Complex64::ZERO);
    for (r, &v) in g.iter().enumerate() {
        out[r + 1] = v;
    }
    Ok(out)
}

/// Barycentric Lagrange interpolation from arbitrary distinct source nodes.
pub fn barycentric_interpolate(xs: &[f64], ys: &[f64], eval: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), ys.len());
    let m = xs.len();
    let mut wts = vec![1.0f64; m];
    for j in 0..m {
        for i in 0..m {
            if i != j {
                wts[j] /= xs[j] - xs[i];
            }
        }
    }
    eval.iter()
        .map(|&x| {
            if let Some(j) = xs.iter().position(|&xj| xj == x) {
                return ys[j];
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..m {
                let t = wts[j] / (x - xs[j]);
                num += t * ys[j];
                den += t;
            }
            num / den
        })
        .collect()
}
