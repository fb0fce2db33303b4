//! Modal Crank–Nicolson evolution of the Grushin equation.
//!
//! A state is stored as `f(t, x, y) = Σₙ fₙ(t, x) sin(n y)` on the interior
//! x-nodes of a [`Grid1D`]. Each mode obeys `∂t fₙ = ∂x² fₙ - n² x² fₙ + uₙ`.

use std::f64::consts::FRAC_PI_2;
use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::geometry::Grid2D;
use crate::par::{self, Execution};
use crate::spectral::{modal_operator, Grid1D};
use crate::tridiag::{self, Thomas};

#[derive(Clone, Debug, PartialEq)]
pub struct ModalState {
    pub t: f64,
    pub n_modes: usize,
    pub nx: usize,
    /// Mode-major: entry `(n - 1) * nx + i` is `fₙ(xᵢ)`.
    pub coeffs: Vec<f64>,
}

impl ModalState {
    pub fn zeros(n_modes: usize, grid: &Grid1D) -> Self {
        ModalState { t: 0.0, n_modes, nx: grid.count(), coeffs: vec![0.0; n_modes * grid.count()] }
    }

    /// `profile(x) sin(n y)`.
    pub fn single_mode(n_modes: usize, grid: &Grid1D, n: usize, profile: &[f64]) -> Result<Self> {
        if n == 0 || n > n_modes || profile.len() != grid.count() {
            return Err(invalid("single_mode: mode index or profile length out of range"));
        }
        let mut s = ModalState::zeros(n_modes, grid);
        s.mode_mut(n).copy_from_slice(profile);
        Ok(s)
    }

    pub fn mode(&self, n: usize) -> &[f64] {
        &self.coeffs[(n - 1) * self.nx..n * self.nx]
    }

    pub fn mode_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.coeffs[(n - 1) * self.nx..n * self.nx]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.coeffs.iter_mut().for_each(|v| *v *= c);
        s
    }
}

/// `‖f‖²_{L²(Ω)} = (π/2) Σₙ ∫ fₙ²`.
pub fn l2_norm_sq(state: &ModalState, grid: &Grid1D) -> f64 {
    FRAC_PI_2 * grid.h() * state.coeffs.iter().map(|v| v * v).sum::<f64>()
}

/// `(π/2) Σₙ ∫ (|∂x fₙ|² + n² x² fₙ²)`, with forward differences that include
/// the Dirichlet end cells. Equals `(π/2) h fᵀ A f` for the discrete operator.
pub fn energy_norm_sq(state: &ModalState, grid: &Grid1D) -> f64 {
    let h = grid.h();
    let mut total = 0.0;
    for n in 1..=state.n_modes {
        let f = state.mode(n);
        let nf = n as f64;
        let mut grad = 0.0;
        let mut prev = 0.0;
        for &v in f.iter().chain(std::iter::once(&0.0)) {
            grad += (v - prev) * (v - prev);
            prev = v;
        }
        let pot: f64 = f.iter().enumerate().map(|(i, &v)| (nf * grid.node(i)).powi(2) * v * v).sum();
        total += grad / h + h * pot;
    }
    FRAC_PI_2 * total
}

/// A modal source. `fill` writes `uₙ(t_mid, xᵢ)` for every mode into `out`
/// (mode-major, like [`ModalState::coeffs`]) for the half step `step + 1/2`.
pub trait Forcing: Sync {
    fn fill(&self, step: usize, t_mid: f64, out: &mut [f64]);

    fn is_zero(&self) -> bool {
        false
    }
}

pub struct Unforced;

impl Forcing for Unforced {
    fn fill(&self, _: usize, _: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// Time-independent modal source.
pub struct ConstantModal(pub Vec<f64>);

impl Forcing for ConstantModal {
    fn fill(&self, _: usize, _: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// `sin(n y_j)` for `n = 1..=n_modes` and all rows of a grid.
#[derive(Clone, Debug)]
pub struct SineTable {
    pub n_modes: usize,
    pub ny: usize,
    values: Vec<f64>,
}

impl SineTable {
    pub fn new(n_modes: usize, ny: usize) -> Self {
        let m = (ny - 1) as f64;
        let mut values = vec![0.0; n_modes * ny];
        for n in 1..=n_modes {
            for j in 0..ny {
                // Reduce n*j mod 2(ny-1) first so large products stay exact.
                let k = (n * j) % (2 * (ny - 1));
                values[(n - 1) * ny + j] = (std::f64::consts::PI * k as f64 / m).sin();
            }
        }
        SineTable { n_modes, ny, values }
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[(n - 1) * self.ny..n * self.ny]
    }
}

/// Sine coefficients `cₙ = (2/(ny-1)) Σⱼ g(yⱼ) sin(n yⱼ)` of a column sampled
/// on all `ny` rows (endpoint values do not contribute).
pub fn sine_forward(column: &[f64], table: &SineTable, out: &mut [f64]) {
    let scale = 2.0 / (table.ny - 1) as f64;
    for n in 1..=out.len() {
        let s = table.row(n);
        let mut acc = 0.0;
        for j in 1..table.ny - 1 {
            acc += column[j] * s[j];
        }
        out[n - 1] = scale * acc;
    }
}

/// `g(yⱼ) = Σₙ cₙ sin(n yⱼ)`.
pub fn sine_inverse(coeffs: &[f64], table: &SineTable, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (n, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let s = table.row(n + 1);
        for j in 0..table.ny {
            out[j] += c * s[j];
        }
    }
}

/// Source sampled on a 2D grid. The closure writes `u(t, ·, ·)` on the whole
/// grid (row-major); interior columns are sine-transformed each step.
pub struct GridForcing<F> {
    pub grid: Grid2D,
    pub n_modes: usize,
    table: SineTable,
    sample: F,
}

impl<F: Fn(f64, &mut [f64]) + Sync> GridForcing<F> {
    pub fn new(grid: Grid2D, n_modes: usize, sample: F) -> Self {
        GridForcing { grid, n_modes, table: SineTable::new(n_modes, grid.ny), sample }
    }
}

impl<F: Fn(f64, &mut [f64]) + Sync> Forcing for GridForcing<F> {
    fn fill(&self, _: usize, t_mid: f64, out: &mut [f64]) {
        let g = self.grid;
        let mut field = vec![0.0; g.len()];
        (self.sample)(t_mid, &mut field);
        let nx = g.nx - 2;
        let mut column = vec![0.0; g.ny];
        let mut coeffs = vec![0.0; self.n_modes];
        for i in 0..nx {
            for j in 0..g.ny {
                column[j] = field[g.idx(i + 1, j)];
            }
            sine_forward(&column, &self.table, &mut coeffs);
            for n in 0..self.n_modes {
                out[n * nx + i] = coeffs[n];
            }
        }
    }
}

/// One Crank–Nicolson step `(I + dt/2 A) f⁺ = (I - dt/2 A) f + dt s`.
pub fn step_mode(coeffs: &[f64], n: usize, dt: f64, source: &[f64], grid: &Grid1D) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    let stepper = CrankNicolson::new(*grid, n, dt)?;
    let mut out = coeffs.to_vec();
    let mut work = vec![0.0; grid.count()];
    stepper.step_one(n, &mut out, source, &mut work);
    Ok(out)
}

/// Pre-factored Crank–Nicolson stepper for modes `1..=n_modes`.
#[derive(Clone, Debug)]
pub struct CrankNicolson {
    pub grid: Grid1D,
    pub dt: f64,
    pub n_modes: usize,
    ops: Vec<(Vec<f64>, Vec<f64>)>,
    factors: Vec<Thomas>,
}

impl CrankNicolson {
    pub fn new(grid: Grid1D, n_modes: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        let mut ops = Vec::with_capacity(n_modes);
        let mut factors = Vec::with_capacity(n_modes);
        for n in 1..=n_modes {
            let (diag, off) = modal_operator(n, &grid);
            let lhs_diag: Vec<f64> = diag.iter().map(|d| 1.0 + 0.5 * dt * d).collect();
            let lhs_off: Vec<f64> = off.iter().map(|o| 0.5 * dt * o).collect();
            let f = Thomas::new(&lhs_diag, &lhs_off)
                .ok_or_else(|| Error::Internal(format!("singular Crank–Nicolson matrix for mode {n}")))?;
            ops.push((diag, off));
            factors.push(f);
        }
        Ok(CrankNicolson { grid, dt, n_modes, ops, factors })
    }

    fn step_one(&self, n: usize, f: &mut [f64], source: &[f64], work: &mut [f64]) {
        let (diag, off) = &self.ops[n - 1];
        tridiag::matvec(diag, off, f, work);
        let half = 0.5 * self.dt;
        for i in 0..f.len() {
            f[i] = f[i] - half * work[i] + self.dt * source[i];
        }
        self.factors[n - 1].solve_in_place(f);
    }

    /// Advance every mode of `state` by one step with the given source.
    pub fn step(&self, state: &mut ModalState, source: &[f64], exec: Execution) {
        let nx = state.nx;
        par::for_each_chunk(exec, &mut state.coeffs, nx, |k, f| {
            let mut work = vec![0.0; nx];
            self.step_one(k + 1, f, &source[k * nx..(k + 1) * nx], &mut work);
        });
        state.t += self.dt;
    }
}

/// Number of steps and effective step for a horizon `t_end` and target `dt`.
pub fn step_count(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t_end > 0.0 && dt > 0.0) {
        return Err(invalid(format!("need T > 0 and dt > 0, got T = {t_end}, dt = {dt}")));
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_end / steps as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Record {
    /// Keep only the initial and final states.
    Ends,
    /// Keep every `k`-th state (plus the final one).
    Every(usize),
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub steps: usize,
    pub states: Vec<ModalState>,
}

impl Trajectory {
    pub fn last(&self) -> &ModalState {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Evolve `f0` to time `t_end`, calling `observe(step, before, after, source)`
/// after every step (the source is the one used for that step).
pub fn evolve_with<O>(
    f0: &ModalState,
    t_end: f64,
    dt: f64,
    forcing: &dyn Forcing,
    exec: Execution,
    mut observe: O,
) -> Result<ModalState>
where
    O: FnMut(usize, &ModalState, &ModalState, &[f64]) -> Result<()>,
{
    let (steps, dt) = step_count(t_end, dt)?;
    let grid = Grid1D::new(f0.nx)?;
    let stepper = CrankNicolson::new(grid, f0.n_modes, dt)?;
    let mut state = f0.clone();
    let mut source = vec![0.0; f0.coeffs.len()];
    let zero = forcing.is_zero();
    for j in 0..steps {
        if !zero {
            forcing.fill(j, (j as f64 + 0.5) * dt, &mut source);
        }
        let before = state.clone();
        stepper.step(&mut state, &source, exec);
        state.t = (j + 1) as f64 * dt;
        if let Some(bad) = state.coeffs.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value at step {} (t = {}), mode {}, node {}",
                j + 1,
                state.t,
                bad / state.nx + 1,
                bad % state.nx
            )));
        }
        observe(j, &before, &state, &source)?;
    }
    Ok(state)
}

pub fn evolve(
    f0: &ModalState,
    t_end: f64,
    dt: f64,
    forcing: &dyn Forcing,
    record: Record,
    exec: Execution,
) -> Result<Trajectory> {
    let (steps, dt_eff) = step_count(t_end, dt)?;
    let every = match record {
        Record::Ends => usize::MAX,
        Record::Every(k) => k.max(1),
    };
    let mut states = vec![f0.clone()];
    let last = evolve_with(f0, t_end, dt, forcing, exec, |j, _, after, _| {
        if (j + 1) % every == 0 && j + 1 != steps {
            states.push(after.clone());
        }
        Ok(())
    })?;
    states.push(last);
    Ok(Trajectory { dt: dt_eff, steps, states })
}

/// Synthesize the grid field of a modal state; boundary nodes are zero.
pub fn synthesize(state: &ModalState, grid: Grid2D, table: &SineTable, out: &mut [f64]) {
    assert_eq!(state.nx, grid.nx - 2);
    out.iter_mut().for_each(|v| *v = 0.0);
    for n in 1..=state.n_modes.min(table.n_modes) {
        let f = state.mode(n);
        let s = table.row(n);
        for j in 1..grid.ny - 1 {
            let sj = s[j];
            if sj == 0.0 {
                continue;
            }
            let row = &mut out[grid.idx(1, j)..grid.idx(grid.nx - 1, j)];
            for (o, &v) in row.iter_mut().zip(f) {
                *o += v * sj;
            }
        }
    }
}

/// Binary snapshot: four little-endian doubles `N, x-count, y-count, t`
/// followed by the `x-count * y-count` field values (row-major, rows in y).
pub fn write_snapshot<W: Write>(w: &mut W, n_modes: usize, grid: Grid2D, t: f64, field: &[f64]) -> io::Result<()> {
    assert_eq!(field.len(), grid.len());
    for v in [n_modes as f64, grid.nx as f64, grid.ny as f64, t] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in field {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub n_modes: usize,
    pub grid: Grid2D,
    pub t: f64,
    pub field: Vec<f64>,
}

pub fn read_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let take = |k: usize| -> Result<f64> {
        bytes
            .get(8 * k..8 * k + 8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .ok_or_else(|| invalid("truncated snapshot"))
    };
    let n_modes = take(0)? as usize;
    let grid = Grid2D { nx: take(1)? as usize, ny: take(2)? as usize };
    let t = take(3)?;
    if bytes.len() != 8 * (4 + grid.len()) {
        return Err(invalid("snapshot length does not match its header"));
    }
    let field = (0..grid.len()).map(|k| take(4 + k)).collect::<Result<_>>()?;
    Ok(Snapshot { n_modes, grid, t, field })
}

/// CSV time series `t,l2,energy` (norms, not squares).
pub fn norms_csv(traj: &Trajectory, grid: &Grid1D) -> String {
    let mut out = String::from("t,l2,energy\n");
    for s in &traj.states {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e}\n",
            s.t,
            l2_norm_sq(s, grid).sqrt(),
            energy_norm_sq(s, grid).sqrt()
        ));
    }
    out
}
