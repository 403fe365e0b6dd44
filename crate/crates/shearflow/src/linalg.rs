//! Dense LU solvers for the small collocation systems used throughout the
//! crate. Partial pivoting, row-major `ndarray` storage.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// LU factorization of a real square matrix with partial pivoting.
pub struct RealLu {
    lu: Array2<f64>,
    piv: Vec<usize>,
}

impl RealLu {
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let mut lu = a.clone();
        let mut piv = (0..n).collect::<Vec<_>>();
        for col in 0..n {
            let mut p = col;
            let mut best = lu[[col, col]].abs();
            for r in col + 1..n {
                let v = lu[[r, col]].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::SingularSystem);
            }
            if p != col {
                piv.swap(p, col);
                for j in 0..n {
                    let tmp = lu[[p, j]];
                    lu[[p, j]] = lu[[col, j]];
                    lu[[col, j]] = tmp;
                }
            }
            let d = lu[[col, col]];
            for r in col + 1..n {
                let m = lu[[r, col]] / d;
                lu[[r, col]] = m;
                if m != 0.0 {
                    for j in col + 1..n {
                        lu[[r, j]] -= m * lu[[col, j]];
                    }
                }
            }
        }
        Ok(Self { lu, piv })
    }

    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.lu.nrows();
        assert_eq!(b.len(), n);
        let mut x = Array1::zeros(n);
        for i in 0..n {
            x[i] = b[self.piv[i]];
        }
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s / self.lu[[i, i]];
        }
        x
    }

    /// Solve with a complex right-hand side by splitting into real and
    /// imaginary parts (the matrix is real).
    pub fn solve_complex(&self, b: &Array1<Complex64>) -> Array1<Complex64> {
        let re = b.mapv(|z| z.re);
        let im = b.mapv(|z| z.im);
        let xr = self.solve(&re);
        let xi = self.solve(&im);
        Array1::from_iter(
            xr.iter()
                .zip(xi.iter())
                .map(|(&r, &i)| Complex64::new(r, i)),
        )
    }
}

/// LU factorization of a complex square matrix with partial pivoting.
pub struct ComplexLu {
    lu: Array2<Complex64>,
    piv: Vec<usize>,
    norm1_a: f64,
}

impl ComplexLu {
    pub fn new(a: &Array2<Complex64>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let mut norm1_a = 0.0f64;
        for j in 0..n {
            let s: f64 = (0..n).map(|i| a[[i, j]].norm()).sum();
            norm1_a = norm1_a.max(s);
        }
        let mut lu = a.clone();
        let mut piv = (0..n).collect::<Vec<_>>();
        for col in 0..n {
            let mut p = col;
            let mut best = lu[[col, col]].norm_sqr();
            for r in col + 1..n {
                let v = lu[[r, col]].norm_sqr();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::SingularSystem);
            }
            if p != col {
                piv.swap(p, col);
                for j in 0..n {
                    let tmp = lu[[p, j]];
                    lu[[p, j]] = lu[[col, j]];
                    lu[[col, j]] = tmp;
                }
            }
            let d = lu[[col, col]];
            for r in col + 1..n {
                let m = lu[[r, col]] / d;
                lu[[r, col]] = m;
                if m != Complex64::ZERO {
                    for j in col + 1..n {
                        let v = lu[[col, j]];
                        lu[[r, j]] -= m * v;
                    }
                }
            }
        }
        Ok(Self { lu, piv, norm1_a })
    }

    pub fn solve(&self, b: &Array1<Complex64>) -> Array1<Complex64> {
        let n = self.lu.nrows();
        assert_eq!(b.len(), n);
        let mut x = Array1::from_elem(n, Complex64::ZERO);
        for i in 0..n {
            x[i] = b[self.piv[i]];
        }
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s / self.lu[[i, i]];
        }
        x
    }

    pub(crate) fn solve_transposed_conj(&self, b: &Array1<Complex64>) -> Array1<Complex64> {
        // Solves A^H y = b given PA = LU, i.e. U^H L^H P y = b.
        let n = self.lu.nrows();
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[[j, i]].conj() * x[j];
            }
            x[i] = s / self.lu[[i, i]].conj();
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[[j, i]].conj() * x[j];
            }
            x[i] = s;
        }
        let mut y = Array1::from_elem(n, Complex64::ZERO);
        for i in 0..n {
            y[self.piv[i]] = x[i];
        }
        y
    }

    /// One-norm condition estimate via a short power iteration on A^{-1}
    /// (Hager-style). Cheap: a few triangular solves.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.lu.nrows();
        if n == 0 {
            return 0.0;
        }
        let mut v = Array1::from_elem(n, Complex64::new(1.0 / n as f64, 0.0));
        let mut est = 0.0f64;
        for _ in 0..3 {
            let x = self.solve(&v);
            est = x.iter().map(|z| z.norm()).sum();
            // Steepest direction for the 1-norm functional.
            let sign = x.mapv(|z| {
                let m = z.norm();
                if m == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    z / m
                }
            });
            let z = self.solve_transposed_conj(&sign);
            let (jmax, _) = z.iter().enumerate().fold((0usize, -1.0f64), |acc, (j, w)| {
                if w.norm() > acc.1 {
                    (j, w.norm())
                } else {
                    acc
                }
            });
            v.fill(Complex64::ZERO);
            v[jmax] = Complex64::new(1.0, 0.0);
        }
        self.norm1_a * est
    }
}

/// Dense real mat-vec.
pub fn matvec(a: &Array2<f64>, x: &Array1<f64>) -> Array1<f64> {
    a.dot(x)
}

/// Dense real-matrix times complex-vector.
pub fn matvec_complex(a: &Array2<f64>, x: &Array1<Complex64>) -> Array1<Complex64> {
    let n = a.nrows();
    let m = a.ncols();
    assert_eq!(m, x.len());
    let mut out = Array1::from_elem(n, Complex64::ZERO);
    for i in 0..n {
        let row = a.row(i);
        let mut sre = 0.0;
        let mut sim = 0.0;
        for j in 0..m {
            let aij = row[j];
            sre += aij * x[j].re;
            sim += aij * x[j].im;
        }
        out[i] = Complex64::new(sre, sim);
    }
    out
}
