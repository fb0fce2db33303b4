//! Fictitious-control synthesis: control the left and right strips
//! separately, then glue the two controlled solutions with the cutoff θ.
//!
//! With `f = θ f_l + (1-θ) f_r` the glued control is
//! `u = θ 1_l u_l + (1-θ) 1_r u_r + (f_r - f_l)(∂x² + x²∂y²)θ
//!      + 2 ∂x(f_r - f_l) ∂xθ + 2 x² ∂y(f_r - f_l) ∂yθ`,
//! evaluated with central differences on the 2D grid.

use crate::control::{hum_control, HumOptions, HumResult};
use crate::error::{invalid, Error, Result};
use crate::geometry::{build_cutoff, critical_abscissa, CutoffField, Grid2D, Path, Region, RegionKind};
use crate::par::{self, Execution};
use crate::solver::{CrankNicolson, Forcing, ModalState, SineTable};
use crate::spectral::Grid1D;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// `(-1, -a) × (0, π)` or `(a, 1) × (0, π)`.
pub fn strip_region(side: Side, a: f64, grid: Grid2D) -> Result<Region> {
    let kind = match side {
        Side::Left => RegionKind::Strip { x_min: -1.0, x_max: -a },
        Side::Right => RegionKind::Strip { x_min: a, x_max: 1.0 },
    };
    Region::new(kind, grid)
}

#[derive(Clone, Debug)]
pub struct StripControl {
    pub side: Side,
    pub a: f64,
    pub t: f64,
    pub region: Region,
    pub hum: HumResult,
    /// `T <= a²/2`: the run proceeds, but failure is expected.
    pub below_critical_time: bool,
}

impl StripControl {
    pub fn controllable(&self) -> bool {
        self.hum.converged
    }
}

pub fn strip_control(
    side: Side,
    a: f64,
    t: f64,
    f0: &ModalState,
    opts: &HumOptions,
    grid: Grid2D,
    exec: Execution,
) -> Result<StripControl> {
    if !(0.0..1.0).contains(&a) {
        return Err(invalid(format!("strip abscissa must lie in [0, 1), got {a}")));
    }
    let region = strip_region(side, a, grid)?;
    let hum = hum_control(&region, t, f0, opts, exec)?;
    Ok(StripControl { side, a, t, region, hum, below_critical_time: t <= 0.5 * a * a })
}

/// Accumulates `‖∂t f - ∂x² f - x² ∂y² f - u‖²` over `(0, T) × Ω` for the
/// Crank–Nicolson time differencing (Laplacian of the step average).
pub struct ResidualAccumulator {
    grid: Grid2D,
    dt: f64,
    sum: f64,
}

impl ResidualAccumulator {
    pub fn new(grid: Grid2D, dt: f64) -> Self {
        ResidualAccumulator { grid, dt, sum: 0.0 }
    }

    pub fn add_step(&mut self, before: &[f64], after: &[f64], u: &[f64], exec: Execution) {
        let g = self.grid;
        let (hx, hy, dt) = (g.hx(), g.hy(), self.dt);
        let rows = par::map_range(exec, g.ny - 2, |jj| {
            let j = jj + 1;
            let mut acc = 0.0;
            for i in 1..g.nx - 1 {
                let k = g.idx(i, j);
                let avg = |d: usize| 0.5 * (before[d] + after[d]);
                let c = avg(k);
                let dxx = (avg(k + 1) - 2.0 * c + avg(k - 1)) / (hx * hx);
                let dyy = (avg(k + g.nx) - 2.0 * c + avg(k - g.nx)) / (hy * hy);
                let x = g.x(i);
                let r = (after[k] - before[k]) / dt - dxx - x * x * dyy - u[k];
                acc += r * r;
            }
            acc
        });
        self.sum += dt * hx * hy * rows.iter().sum::<f64>();
    }

    pub fn value(&self) -> f64 {
        self.sum.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlueDiagnostics {
    pub terminal_norm: f64,
    pub f0_norm: f64,
    /// Grid nodes outside `ω₀` where the glued control is ever nonzero.
    pub support_violations: usize,
    /// Location `(x, y)` of the first violation, if any.
    pub first_violation: Option<(f64, f64)>,
    pub pde_residual: f64,
    pub control_norm: f64,
    /// `max |f(0) - f₀|` on the grid.
    pub initial_mismatch: f64,
    pub left_residual: f64,
    pub right_residual: f64,
}

#[derive(Clone, Debug)]
pub struct GluedSolution {
    pub theta: CutoffField,
    pub diagnostics: GlueDiagnostics,
    pub n_modes: usize,
    /// Glued state on the grid at selected times, including `t = 0` and `T`.
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

pub fn verify_pde_residual(sol: &GluedSolution) -> f64 {
    sol.diagnostics.pde_residual
}

/// `1_ω Σ_m c_m(x) sin(m y)` on the grid from mode-major profiles `c_m`.
pub fn masked_field(modes: &[f64], n_modes: usize, region: &Region, table: &SineTable, out: &mut [f64], exec: Execution) {
    let g = region.grid;
    let state = ModalState { t: 0.0, n_modes, nx: g.nx - 2, coeffs: modes.to_vec() };
    synthesize_par(&state, g, table, out, exec);
    out.iter_mut().zip(&region.mask).for_each(|(v, &m)| {
        if !m {
            *v = 0.0;
        }
    });
}

/// Row-parallel version of [`solver::synthesize`] that skips empty modes.
fn synthesize_par(state: &ModalState, grid: Grid2D, table: &SineTable, out: &mut [f64], exec: Execution) {
    let active: Vec<usize> = (1..=state.n_modes).filter(|&n| state.mode(n).iter().any(|&v| v != 0.0)).collect();
    par::for_each_chunk(exec, out, grid.nx, |j, row| {
        row.iter_mut().for_each(|v| *v = 0.0);
        if j == 0 || j + 1 == grid.ny {
            return;
        }
        for &n in &active {
            let s = table.row(n)[j];
            if s == 0.0 {
                continue;
            }
            for (o, &v) in row[1..grid.nx - 1].iter_mut().zip(state.mode(n)) {
                *o += v * s;
            }
        }
    });
}

/// Glue two strip controls that start from the same `f0`.
pub fn glue(
    left: &StripControl,
    right: &StripControl,
    f0: &ModalState,
    theta: &CutoffField,
    snapshot_every: usize,
    exec: Execution,
) -> Result<GluedSolution> {
    let g = theta.grid;
    if left.region.grid != g || right.region.grid != g || f0.nx != g.nx - 2 {
        return Err(invalid("glue inputs live on different grids"));
    }
    if (left.t - right.t).abs() > 1e-15 || left.hum.forcing.steps != right.hum.forcing.steps {
        return Err(invalid("strip controls use different horizons or time steps"));
    }
    let (steps, dt) = (left.hum.forcing.steps, left.hum.forcing.dt);
    let n_modes = f0.n_modes;
    let grid1 = Grid1D::new(f0.nx)?;
    let stepper = CrankNicolson::new(grid1, n_modes, dt)?;
    let table = SineTable::new(n_modes, g.ny);
    let [tx, ty, txx, tyy] = theta.derivatives();
    let th = &theta.theta;

    let mut fl = f0.clone();
    let mut fr = f0.clone();
    let len = g.len();
    let mut fl_grid = vec![0.0; len];
    synthesize_par(&fl, g, &table, &mut fl_grid, exec);
    let f0_grid = fl_grid.clone();
    let mut fr_grid = fl_grid.clone();
    let glued = |a: &[f64], b: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.extend((0..len).map(|k| th[k] * a[k] + (1.0 - th[k]) * b[k]));
    };
    let mut f_prev = Vec::with_capacity(len);
    glued(&fl_grid, &fr_grid, &mut f_prev);
    let initial_mismatch = f_prev.iter().zip(&f0_grid).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut snapshots = vec![(0.0, f_prev.clone())];
    let mut residual = ResidualAccumulator::new(g, dt);
    let mut violated = vec![false; len];
    let mut control_sq = 0.0;
    let mut src = vec![0.0; n_modes * f0.nx];
    let mut modes = vec![0.0; n_modes * f0.nx];
    let (mut ul, mut ur) = (vec![0.0; len], vec![0.0; len]);
    let mut fl_next = vec![0.0; len];
    let mut fr_next = vec![0.0; len];
    let mut f_next = Vec::with_capacity(len);
    let mut diff = vec![0.0; len];
    let mut u = vec![0.0; len];

    for j in 0..steps {
        let t_mid = (j as f64 + 0.5) * dt;
        for (side, state, out_u, out_f) in
            [(left, &mut fl, &mut ul, &mut fl_next), (right, &mut fr, &mut ur, &mut fr_next)]
        {
            side.hum.forcing.fill(j, t_mid, &mut src);
            stepper.step(state, &src, exec);
            if !state.is_finite() {
                return Err(Error::Numerical(format!("non-finite strip state at step {}", j + 1)));
            }
            side.hum.forcing.control_modes(j, &mut modes);
            masked_field(&modes, n_modes, &side.region, &table, out_u, exec);
            synthesize_par(state, g, &table, out_f, exec);
        }
        for k in 0..len {
            diff[k] = 0.5 * (fr_grid[k] + fr_next[k]) - 0.5 * (fl_grid[k] + fl_next[k]);
        }
        let (hx, hy) = (g.hx(), g.hy());
        par::for_each_chunk(exec, &mut u, g.nx, |jj, row| {
            for (i, out) in row.iter_mut().enumerate() {
                let k = g.idx(i, jj);
                let mut v = th[k] * ul[k] + (1.0 - th[k]) * ur[k];
                if g.is_interior(i, jj) && (tx[k] != 0.0 || ty[k] != 0.0 || txx[k] != 0.0 || tyy[k] != 0.0) {
                    let x = g.x(i);
                    let dx = (diff[k + 1] - diff[k - 1]) / (2.0 * hx);
                    let dy = (diff[k + g.nx] - diff[k - g.nx]) / (2.0 * hy);
                    v += diff[k] * (txx[k] + x * x * tyy[k]) + 2.0 * dx * tx[k] + 2.0 * x * x * dy * ty[k];
                }
                *out = v;
            }
        });
        glued(&fl_next, &fr_next, &mut f_next);
        residual.add_step(&f_prev, &f_next, &u, exec);
        control_sq += dt * hx * hy * u.iter().map(|v| v * v).sum::<f64>();
        for k in 0..len {
            if u[k] != 0.0 && !theta.tube[k] {
                violated[k] = true;
            }
        }
        std::mem::swap(&mut f_prev, &mut f_next);
        std::mem::swap(&mut fl_grid, &mut fl_next);
        std::mem::swap(&mut fr_grid, &mut fr_next);
        if snapshot_every > 0 && (j + 1) % snapshot_every == 0 && j + 1 != steps {
            snapshots.push(((j + 1) as f64 * dt, f_prev.clone()));
        }
    }
    snapshots.push((steps as f64 * dt, f_prev.clone()));

    let first_violation = violated.iter().position(|&v| v).map(|k| (g.x(k % g.nx), g.y(k / g.nx)));
    let diagnostics = GlueDiagnostics {
        terminal_norm: g.l2_norm(&f_prev),
        f0_norm: g.l2_norm(&f0_grid),
        support_violations: violated.iter().filter(|&&v| v).count(),
        first_violation,
        pde_residual: residual.value(),
        control_norm: control_sq.sqrt(),
        initial_mismatch,
        left_residual: left.hum.residual,
        right_residual: right.hum.residual,
    };
    Ok(GluedSolution { theta: theta.clone(), diagnostics, n_modes, snapshots })
}

#[derive(Clone, Debug)]
pub struct GlueConfig {
    pub path: Path,
    pub eps: f64,
    pub t: f64,
    pub grid: Grid2D,
    pub hum: HumOptions,
    pub snapshot_every: usize,
}

/// The whole positive-result pipeline: cutoff, two strip controls, gluing.
/// Fails hard when the glued control leaves `ω₀`.
pub fn run_pipeline(cfg: &GlueConfig, f0: &ModalState, exec: Execution) -> Result<(GluedSolution, StripControl, StripControl)> {
    let a = critical_abscissa(&cfg.path);
    let theta = build_cutoff(&cfg.path, cfg.eps, cfg.grid, exec)?;
    if theta.support_violations() > 0 {
        return Err(Error::Numerical(format!(
            "cutoff gradient leaves the tube at {} nodes",
            theta.support_violations()
        )));
    }
    let (left, right) = par::join(
        exec,
        || strip_control(Side::Left, a, cfg.t, f0, &cfg.hum, cfg.grid, exec),
        || strip_control(Side::Right, a, cfg.t, f0, &cfg.hum, cfg.grid, exec),
    );
    let (left, right) = (left?, right?);
    let sol = glue(&left, &right, f0, &theta, cfg.snapshot_every, exec)?;
    if let Some((x, y)) = sol.diagnostics.first_violation {
        return Err(Error::Numerical(format!(
            "glued control is nonzero outside the tube at {} nodes, first at ({x}, {y})",
            sol.diagnostics.support_violations
        )));
    }
    Ok((sol, left, right))
}

/// `Σ_{n<=count} cₙ vₙ(x) sin(n y)` with `cₙ = 2^{1-n}`, a smooth default
/// initial state built from ground states.
pub fn default_initial_state(n_modes: usize, count: usize, grid: &Grid1D) -> Result<ModalState> {
    let mut f0 = ModalState::zeros(n_modes, grid);
    for n in 1..=count.min(n_modes) {
        let p = crate::spectral::solve_mode_eigenpair(n, grid)?;
        let c = 0.5f64.powi(n as i32 - 1);
        f0.mode_mut(n).iter_mut().zip(&p.v).for_each(|(a, b)| *a = c * b);
    }
    Ok(f0)
}
