//! Ground states of the modal operator `-d²/dx² + (n x)²` on (-1, 1) with
//! Dirichlet conditions, and the quantities derived from them.

use crate::error::{invalid, Error, Result};
use crate::par::{self, Execution};
use crate::tridiag;

/// Uniform interior grid of (-1, 1) with an odd node count, so `x = 0` is a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    count: usize,
    h: f64,
}

impl Grid1D {
    pub fn new(count: usize) -> Result<Self> {
        if count < 3 || count.is_multiple_of(2) {
            return Err(invalid(format!("grid node count must be odd and >= 3, got {count}")));
        }
        Ok(Grid1D { count, h: 2.0 / (count as f64 + 1.0) })
    }

    /// Grid with spacing `h`; `2/h` must be an even integer (within rounding).
    pub fn with_spacing(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(invalid(format!("grid spacing must lie in (0, 1), got {h}")));
        }
        let cells = (2.0 / h).round();
        if ((2.0 / h) - cells).abs() > 1e-6 * cells {
            return Err(invalid(format!("2/h must be an integer, got h = {h}")));
        }
        Self::new(cells as usize - 1)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn center(&self) -> usize {
        (self.count - 1) / 2
    }

    pub fn mirror(&self, i: usize) -> usize {
        self.count - 1 - i
    }

    /// Node `i`; computed from the center so that nodes are exactly symmetric.
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 - self.center() as f64) * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.node(i)).collect()
    }

    /// The grid with doubled spacing, when it still contains `x = 0`.
    pub fn coarsened(&self) -> Option<Grid1D> {
        let coarse = (self.count - 1) / 2;
        Grid1D::new(coarse).ok()
    }

    /// Trapezoidal rule over (-1, 1); the endpoint values are the Dirichlet zeros.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.h * values.iter().sum::<f64>()
    }
}

/// Diagonal and off-diagonal of the discrete modal operator.
pub fn modal_operator(n: usize, grid: &Grid1D) -> (Vec<f64>, Vec<f64>) {
    let h2 = grid.h() * grid.h();
    let nf = n as f64;
    let diag = (0..grid.count())
        .map(|i| {
            let x = grid.node(i);
            2.0 / h2 + nf * nf * x * x
        })
        .collect();
    let off = vec![-1.0 / h2; grid.count() - 1];
    (diag, off)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub n: usize,
    /// Smallest eigenvalue of the discrete operator on the pair's grid.
    pub lambda: f64,
    /// Eigenfunction samples with `v(0) = 1`.
    pub v: Vec<f64>,
}

pub fn resolution_limit(n: usize) -> f64 {
    0.2 / (n.max(1) as f64).sqrt()
}

fn check_resolution(n: usize, grid: &Grid1D) -> Result<()> {
    let limit = resolution_limit(n);
    if grid.h() > limit {
        return Err(Error::Resolution { n, h: grid.h(), limit });
    }
    Ok(())
}

fn start_vector(count: usize) -> Vec<f64> {
    // Not symmetric, so it overlaps odd states as well as even ones.
    (0..count).map(|i| 1.0 + 0.25 * (0.37 * i as f64 + 0.11).sin()).collect()
}

pub fn solve_mode_eigenpair(n: usize, grid: &Grid1D) -> Result<EigenPair> {
    check_resolution(n, grid)?;
    let (diag, off) = modal_operator(n, grid);
    let tol = 1e-12 * (n.max(1) as f64);
    let lambda = tridiag::kth_eigenvalue(&diag, &off, 0, tol);
    let mut v = tridiag::inverse_iteration(&diag, &off, lambda, 3, &start_vector(grid.count()));

    for i in 0..grid.center() {
        let j = grid.mirror(i);
        let avg = 0.5 * (v[i] + v[j]);
        v[i] = avg;
        v[j] = avg;
    }
    let c = grid.center();
    let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !(v[c].abs() > 1e-8 * peak) {
        return Err(Error::Internal(format!("ground state of mode {n} vanishes at x = 0")));
    }
    let scale = v[c];
    v.iter_mut().for_each(|x| *x /= scale);
    if let Some(bad) = v.iter().position(|&x| x < -1e-12) {
        return Err(Error::Internal(format!(
            "ground state of mode {n} changes sign at node {bad}"
        )));
    }
    Ok(EigenPair { n, lambda, v })
}

/// The `k` lowest eigenpairs of mode `n`, normalized to unit discrete L² norm
/// (`h Σ φ² = 1`). Each vector is oriented so its largest-magnitude entry
/// nearest the left end is positive.
pub fn mode_eigenbasis(n: usize, k: usize, grid: &Grid1D) -> Result<Vec<(f64, Vec<f64>)>> {
    check_resolution(n, grid)?;
    if k == 0 || k > grid.count() {
        return Err(invalid(format!("basis size must lie in 1..={}, got {k}", grid.count())));
    }
    let (diag, off) = modal_operator(n, grid);
    let start = start_vector(grid.count());
    let tol = 1e-12 * (n.max(1) as f64);
    let h = grid.h();
    let mut basis: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
    for j in 0..k {
        let lambda = tridiag::kth_eigenvalue(&diag, &off, j, tol * (j + 1) as f64);
        let mut v = tridiag::inverse_iteration(&diag, &off, lambda, 3, &start);
        for (_, u) in &basis {
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * h;
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numerical(format!("inverse iteration collapsed for mode {n}, state {j}")));
        }
        let lead = v.iter().fold(0.0f64, |a, &x| if x.abs() > a.abs() * (1.0 + 1e-9) { x } else { a });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        v.iter_mut().for_each(|x| *x *= sign / norm);
        basis.push((lambda, v));
    }
    Ok(basis)
}

/// `∫ v²` over (-1, 1) by the trapezoidal rule.
pub fn mode_norm_sq(pair: &EigenPair, grid: &Grid1D) -> f64 {
    grid.integrate(&pair.v.iter().map(|x| x * x).collect::<Vec<_>>())
}

/// `w(x) = e^{(1-ε) n x²/2} v(x)`.
pub fn w_profile(pair: &EigenPair, eps: f64, grid: &Grid1D) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(invalid(format!("eps must lie in (0, 1/2), got {eps}")));
    }
    let rate = 0.5 * (1.0 - eps) * pair.n as f64;
    let log_form = rate > 300.0;
    Ok(pair
        .v
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = grid.node(i);
            if log_form {
                if v == 0.0 {
                    0.0
                } else {
                    v.signum() * (v.abs().ln() + rate * x * x).exp()
                }
            } else {
                v * (rate * x * x).exp()
            }
        })
        .collect())
}

/// `(4 λ_h - λ_{2h}) / 3`, or the raw value when the grid cannot be coarsened
/// at this resolution.
pub fn extrapolated_lambda(n: usize, fine: &EigenPair, grid: &Grid1D) -> (f64, bool) {
    let coarse = match grid.coarsened() {
        Some(g) => g,
        None => return (fine.lambda, false),
    };
    match solve_mode_eigenpair(n, &coarse) {
        Ok(c) => ((4.0 * fine.lambda - c.lambda) / 3.0, true),
        Err(_) => (fine.lambda, false),
    }
}

#[derive(Clone, Debug)]
pub struct SpectralTable {
    pub grid: Grid1D,
    pub eps: f64,
    /// Eigenpairs for n = 1..=N, in order.
    pub pairs: Vec<EigenPair>,
    /// Reported eigenvalues: Richardson-extrapolated when `extrapolated[i]`.
    pub lambda: Vec<f64>,
    pub extrapolated: Vec<bool>,
    pub rho: Vec<f64>,
    pub normsq: Vec<f64>,
    pub wmax: Vec<f64>,
}

impl SpectralTable {
    /// Table for modes 1..=n_max. With `extrapolate`, reported eigenvalues are
    /// corrected with a second solve on the doubled-spacing grid.
    pub fn build(n_max: usize, grid: Grid1D, eps: f64, extrapolate: bool, exec: Execution) -> Result<Self> {
        if n_max == 0 {
            return Err(invalid("table needs at least one mode"));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(invalid(format!("eps must lie in (0, 1/2), got {eps}")));
        }
        let rows = par::map_range(exec, n_max, |i| -> Result<_> {
            let n = i + 1;
            let pair = solve_mode_eigenpair(n, &grid)?;
            let (lambda, ext) = if extrapolate {
                extrapolated_lambda(n, &pair, &grid)
            } else {
                (pair.lambda, false)
            };
            let normsq = mode_norm_sq(&pair, &grid);
            let w = w_profile(&pair, eps, &grid)?;
            let wmax = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            Ok((pair, lambda, ext, normsq, wmax))
        });
        let mut table = SpectralTable {
            grid,
            eps,
            pairs: Vec::with_capacity(n_max),
            lambda: Vec::with_capacity(n_max),
            extrapolated: Vec::with_capacity(n_max),
            rho: Vec::with_capacity(n_max),
            normsq: Vec::with_capacity(n_max),
            wmax: Vec::with_capacity(n_max),
        };
        for row in rows {
            let (pair, lambda, ext, normsq, wmax) = row?;
            table.rho.push(lambda - pair.n as f64);
            table.pairs.push(pair);
            table.lambda.push(lambda);
            table.extrapolated.push(ext);
            table.normsq.push(normsq);
            table.wmax.push(wmax);
        }
        Ok(table)
    }

    pub fn n_max(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair(&self, n: usize) -> &EigenPair {
        &self.pairs[n - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,lambda,rho,normsq,wmax\n");
        for i in 0..self.pairs.len() {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.pairs[i].n, self.lambda[i], self.rho[i], self.normsq[i], self.wmax[i]
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RhoStatus {
    /// n < 10: no bound is asserted.
    Unchecked,
    Within,
    /// |ρₙ| exceeds e^{-n/2}.
    Flagged,
    /// e^{-n/2} is below ten times the h²n² error estimate.
    BelowFloor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoEntry {
    pub n: usize,
    pub rho: f64,
    pub error_estimate: f64,
    pub status: RhoStatus,
}

pub fn residual_symbol(table: &SpectralTable) -> Vec<RhoEntry> {
    let h = table.grid.h();
    table
        .pairs
        .iter()
        .zip(&table.rho)
        .map(|(p, &rho)| {
            let n = p.n as f64;
            let error_estimate = h * h * n * n;
            let bound = (-n / 2.0).exp();
            let status = if p.n < 10 {
                RhoStatus::Unchecked
            } else if bound < 10.0 * error_estimate {
                RhoStatus::BelowFloor
            } else if rho.abs() > bound {
                RhoStatus::Flagged
            } else {
                RhoStatus::Within
            };
            RhoEntry { n: p.n, rho, error_estimate, status }
        })
        .collect()
}
