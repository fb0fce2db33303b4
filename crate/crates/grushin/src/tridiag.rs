//! Symmetric tridiagonal kernels: Sturm counts, bisection, inverse iteration
//! and a reusable Thomas factorization.

/// Number of eigenvalues strictly below `sigma`.
pub fn sturm_count(diag: &[f64], off: &[f64], sigma: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let coupling = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] / d };
        d = diag[i] - sigma - coupling;
        if d == 0.0 {
            // Nudge a zero pivot to the negative side; the count is unaffected
            // in exact arithmetic up to the tie convention.
            d = -f64::EPSILON * (diag[i].abs() + sigma.abs() + 1.0);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

pub fn gershgorin(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..diag.len() {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < diag.len() { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - left - right);
        hi = hi.max(diag[i] + left + right);
    }
    (lo, hi)
}

/// The `k`-th smallest eigenvalue (0-based) by bisection to absolute width `tol`.
pub fn kth_eigenvalue(diag: &[f64], off: &[f64], k: usize, tol: f64) -> f64 {
    let (mut lo, mut hi) = gershgorin(diag, off);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solve `(T - sigma I) x = rhs` by Gaussian elimination without pivoting.
pub fn solve_shifted(diag: &[f64], off: &[f64], sigma: f64, rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut x = rhs.to_vec();
    let tiny = f64::EPSILON * diag.iter().fold(1.0f64, |a, d| a.max(d.abs()));
    let mut denom = diag[0] - sigma;
    if denom.abs() < tiny {
        denom = tiny;
    }
    for i in 0..m {
        if i > 0 {
            denom = diag[i] - sigma - off[i - 1] * c[i - 1];
            if denom.abs() < tiny {
                denom = tiny;
            }
            x[i] = (x[i] - off[i - 1] * x[i - 1]) / denom;
        } else {
            x[0] /= denom;
        }
        if i + 1 < m {
            c[i] = off[i] / denom;
        }
    }
    for i in (0..m.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

/// Inverse iteration at a (near-)eigenvalue, normalized to unit max-norm.
pub fn inverse_iteration(diag: &[f64], off: &[f64], lambda: f64, sweeps: usize, start: &[f64]) -> Vec<f64> {
    let mut v = start.to_vec();
    for _ in 0..sweeps {
        v = solve_shifted(diag, off, lambda, &v);
        let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if scale > 0.0 && scale.is_finite() {
            v.iter_mut().for_each(|x| *x /= scale);
        }
    }
    v
}

pub fn matvec(diag: &[f64], off: &[f64], x: &[f64], out: &mut [f64]) {
    let m = diag.len();
    for i in 0..m {
        let mut s = diag[i] * x[i];
        if i > 0 {
            s += off[i - 1] * x[i - 1];
        }
        if i + 1 < m {
            s += off[i] * x[i + 1];
        }
        out[i] = s;
    }
}

/// LU factors of a fixed tridiagonal matrix, for repeated solves.
#[derive(Clone, Debug)]
pub struct Thomas {
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl Thomas {
    /// Factor the matrix with diagonal `diag` and symmetric off-diagonal `off`.
    /// Returns `None` on a zero pivot.
    pub fn new(diag: &[f64], off: &[f64]) -> Option<Self> {
        let m = diag.len();
        let mut lower = vec![0.0; m];
        let mut inv_pivot = vec![0.0; m];
        let mut pivot = diag[0];
        for i in 0..m {
            if i > 0 {
                lower[i] = off[i - 1] / pivot;
                pivot = diag[i] - lower[i] * off[i - 1];
            }
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            inv_pivot[i] = 1.0 / pivot;
        }
        Some(Thomas { lower, inv_pivot, upper: off.to_vec() })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let m = x.len();
        for i in 1..m {
            x[i] -= self.lower[i] * x[i - 1];
        }
        x[m - 1] *= self.inv_pivot[m - 1];
        for i in (0..m - 1).rev() {
            x[i] = (x[i] - self.upper[i] * x[i + 1]) * self.inv_pivot[i];
        }
    }
}
