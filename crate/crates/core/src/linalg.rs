//! Small linear-algebra kernels: preconditioned conjugate gradients and a
//! banded LU factorization with partial pivoting.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("operator is not positive definite (p'Ap = {curvature:e})")]
    NotPositiveDefinite { curvature: f64 },
    #[error("matrix is singular at pivot {0}")]
    Singular(usize),
    #[error("non-finite value in linear system")]
    NonFinite,
}

/// Square linear operator acting on flat cell vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for symmetric positive definite `op`, Jacobi
/// preconditioned when the diagonal is positive.
///
/// Stops once `||b - A x||_2 <= rel_tol * ||b||_2`.
pub fn pcg<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x0: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome, LinalgError> {
    let n = op.dim();
    debug_assert_eq!(b.len(), n);
    debug_assert_eq!(x0.len(), n);
    if b.iter().chain(x0).any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let diag = op.diagonal();
    let inv_diag: Option<Vec<f64>> = diag
        .iter()
        .all(|d| *d > 0.0)
        .then(|| diag.iter().map(|d| 1.0 / d).collect());
    let precondition = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(inv) => z
            .iter_mut()
            .zip(r)
            .zip(inv)
            .for_each(|((z, r), i)| *z = r * i),
        None => z.copy_from_slice(r),
    };

    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut res = dot(&r, &r).sqrt() / b_norm;
    if res <= rel_tol {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: res,
        });
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for iteration in 1..=max_iter {
        op.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        // NaN curvature must take this branch too.
        if curvature.is_nan() || curvature <= 0.0 {
            if !curvature.is_finite() {
                return Err(LinalgError::NonFinite);
            }
            return Err(LinalgError::NotPositiveDefinite { curvature });
        }
        let step = rz / curvature;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if !res.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        if res <= rel_tol {
            return Ok(CgOutcome {
                x,
                iterations: iteration,
                relative_residual: res,
            });
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinalgError::NoConvergence {
        iterations: max_iter,
        residual: res,
    })
}

/// LU factors of a band matrix with `bw` sub- and super-diagonals.
///
/// Row pivoting widens the upper band to `2 bw`; storage is dense per row
/// over the columns `i - bw ..= i + 2 bw`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    bw: usize,
    width: usize,
    rows: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    /// Factors the matrix with entries `entry(i, j)` for `|i - j| <= bw`.
    pub fn factor(
        n: usize,
        bw: usize,
        entry: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, LinalgError> {
        // Column j of row i lives at offset (j + bw - i) in [0, width).
        let width = 3 * bw + 1;
        let mut rows = vec![0.0; n * width];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw).min(n - 1);
            for j in lo..=hi {
                let a = entry(i, j);
                if !a.is_finite() {
                    return Err(LinalgError::NonFinite);
                }
                rows[i * width + j + bw - i] = a;
            }
        }
        let mut pivots = vec![0; n];
        let at = |i: usize, j: usize| i * width + j + bw - i;
        for k in 0..n {
            let last = (k + bw).min(n - 1);
            let mut piv = k;
            let mut best = rows[at(k, k)].abs();
            for i in k + 1..=last {
                let a = rows[at(i, k)].abs();
                if a > best {
                    best = a;
                    piv = i;
                }
            }
            if best == 0.0 {
                return Err(LinalgError::Singular(k));
            }
            pivots[k] = piv;
            let col_hi = (k + 2 * bw).min(n - 1);
            if piv != k {
                for j in k..=col_hi {
                    // Row piv may not store columns beyond piv + 2bw; those are zero.
                    let a = at(k, j);
                    let b_in_band = j + bw >= piv && j <= piv + 2 * bw;
                    let vb = if b_in_band { rows[at(piv, j)] } else { 0.0 };
                    let va = rows[a];
                    rows[a] = vb;
                    if b_in_band {
                        rows[at(piv, j)] = va;
                    }
                }
            }
            let pivot = rows[at(k, k)];
            for i in k + 1..=last {
                let l = rows[at(i, k)] / pivot;
                rows[at(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..=col_hi.min(i + 2 * bw) {
                        rows[at(i, j)] -= l * rows[at(k, j)];
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            bw,
            width,
            rows,
            pivots,
        })
    }

    #[allow(clippy::needless_range_loop)] // band indices read clearer than iterators
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, width) = (self.n, self.bw, self.width);
        let at = |i: usize, j: usize| i * width + j + bw - i;
        let mut x = b.to_vec();
        for k in 0..n {
            let piv = self.pivots[k];
            if piv != k {
                x.swap(k, piv);
            }
            let xk = x[k];
            for i in k + 1..=(k + bw).min(n - 1) {
                x[i] -= self.rows[at(i, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + 2 * bw).min(n - 1) {
                s -= self.rows[at(k, j)] * x[j];
            }
            x[k] = s / self.rows[at(k, k)];
        }
        x
    }
}
