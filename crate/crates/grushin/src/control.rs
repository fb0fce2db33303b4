//! Observability Gramians on arbitrary regions, the discrete observability
//! constant, minimal-time scans and HUM control synthesis.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::geometry::Region;
use crate::par::{self, Execution};
use crate::solver::{self, Forcing, ModalState};
use crate::spectral::{mode_eigenbasis, Grid1D, SpectralTable};

/// y-coupling of the masked source:
/// `S_nm(xᵢ) = (2/(ny-1)) Σⱼ 1_ω(xᵢ, yⱼ) sin(n yⱼ) sin(m yⱼ)`.
///
/// Columns with identical mask patterns share one matrix. Projecting the
/// masked field `1_ω Σ c_m(x) sin(m y)` onto `sin(n y)` gives `Σ_m S_nm c_m`.
#[derive(Clone, Debug)]
pub struct ModalCoupling {
    pub n_modes: usize,
    pub nx: usize,
    patterns: Vec<Vec<f64>>,
    column: Vec<usize>,
}

impl ModalCoupling {
    pub fn new(region: &Region, n_modes: usize) -> Self {
        let g = region.grid;
        let nx = g.nx - 2;
        let table = solver::SineTable::new(n_modes, g.ny);
        let scale = 2.0 / (g.ny - 1) as f64;
        let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
        let mut masks: Vec<Vec<bool>> = Vec::new();
        let mut column = Vec::with_capacity(nx);
        for i in 0..nx {
            let key: Vec<bool> = (0..g.ny).map(|j| region.mask[g.idx(i + 1, j)]).collect();
            let next = masks.len();
            let k = *index.entry(key.clone()).or_insert_with(|| {
                masks.push(key);
                next
            });
            column.push(k);
        }
        let patterns = masks
            .iter()
            .map(|mask| {
                let rows: Vec<usize> = (0..g.ny).filter(|&j| mask[j]).collect();
                let mut s = vec![0.0; n_modes * n_modes];
                for n in 1..=n_modes {
                    for m in n..=n_modes {
                        let (a, b) = (table.row(n), table.row(m));
                        let mut v = scale * rows.iter().map(|&j| a[j] * b[j]).sum::<f64>();
                        // Full or empty columns are exactly orthogonal; drop the rounding.
                        if v.abs() < 1e-13 {
                            v = 0.0;
                        }
                        s[(n - 1) * n_modes + m - 1] = v;
                        s[(m - 1) * n_modes + n - 1] = v;
                    }
                }
                s
            })
            .collect();
        ModalCoupling { n_modes, nx, patterns, column }
    }

    pub fn entry(&self, i: usize, n: usize, m: usize) -> f64 {
        self.patterns[self.column[i]][(n - 1) * self.n_modes + m - 1]
    }

    /// True when `S_nm(x) = 0` at every node.
    pub fn vanishes(&self, n: usize, m: usize) -> bool {
        self.patterns.iter().all(|p| p[(n - 1) * self.n_modes + m - 1] == 0.0)
    }

    /// `out_n(xᵢ) = Σ_m S_nm(xᵢ) c_m(xᵢ)`, mode-major layout.
    pub fn apply(&self, c: &[f64], out: &mut [f64]) {
        let (nm, nx) = (self.n_modes, self.nx);
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..nx {
            let p = &self.patterns[self.column[i]];
            for n in 0..nm {
                let row = &p[n * nm..(n + 1) * nm];
                let mut acc = 0.0;
                for m in 0..nm {
                    acc += row[m] * c[m * nx + i];
                }
                out[n * nx + i] = acc;
            }
        }
    }
}

/// How time enters the Gramian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeModel {
    /// Continuous time, closed-form integrals.
    Exact,
    /// The Crank–Nicolson propagator with (effective) step `dt`, matching
    /// what the solver does.
    CrankNicolson { dt: f64 },
}

impl TimeModel {
    /// Squared decay `|S(T)|²` of a mode with eigenvalue `lambda`.
    fn decay_sq(self, lambda: f64, t: f64) -> Result<f64> {
        Ok(match self {
            TimeModel::Exact => (-2.0 * lambda * t).exp(),
            TimeModel::CrankNicolson { dt } => {
                let (steps, dt) = solver::step_count(t, dt)?;
                let x = 0.5 * lambda * dt;
                ((1.0 - x) / (1.0 + x)).powi(2 * steps as i32)
            }
        })
    }

    /// `∫₀ᵀ e^{-(λa+λb)t} dt` or its Crank–Nicolson analogue.
    fn factor(self, la: f64, lb: f64, t: f64) -> Result<f64> {
        Ok(match self {
            TimeModel::Exact => {
                let s = la + lb;
                if s.abs() < 1e-300 {
                    t
                } else {
                    -(-s * t).exp_m1() / s
                }
            }
            TimeModel::CrankNicolson { dt } => {
                let (steps, dt) = solver::step_count(t, dt)?;
                cn_factor(la, lb, dt, steps)
            }
        })
    }
}

/// `dt q_a q_b Σ_{i<J} (R_a R_b)^i` with `R = (1-x)/(1+x)`, `q = 1/(1+x)`,
/// `x = λ dt/2`.
fn cn_factor(la: f64, lb: f64, dt: f64, steps: usize) -> f64 {
    let (xa, xb) = (0.5 * la * dt, 0.5 * lb * dt);
    let (qa, qb) = (1.0 / (1.0 + xa), 1.0 / (1.0 + xb));
    let rr = (1.0 - xa) * (1.0 - xb) * qa * qb;
    let one_minus = 2.0 * (xa + xb) * qa * qb;
    let sum = if one_minus.abs() < 1e-14 {
        steps as f64
    } else {
        (1.0 - rr.powi(steps as i32)) / one_minus
    };
    dt * qa * qb * sum
}

/// Terminal mass `M_T` (diagonal) and observation Gram matrix `G_ω`.
#[derive(Clone, Debug)]
pub struct GramPair {
    pub t: f64,
    pub m_t: Vec<f64>,
    pub g: DMatrix<f64>,
}

/// Time-independent part of the Gramian: `W_nm = (π/2) ∫ vₙ vₘ S_nm dx`.
#[derive(Clone, Debug)]
pub struct SpatialGram {
    pub n_modes: usize,
    pub lambda: Vec<f64>,
    pub mass: Vec<f64>,
    pub w: DMatrix<f64>,
}

fn check_compat(region: &Region, table: &SpectralTable, n_modes: usize) -> Result<()> {
    if region.grid.nx - 2 != table.grid.count() {
        return Err(invalid(format!(
            "region grid has {} interior columns but the spectral grid has {} nodes",
            region.grid.nx - 2,
            table.grid.count()
        )));
    }
    if n_modes == 0 || n_modes > table.n_max() {
        return Err(invalid(format!("mode count {n_modes} outside 1..={}", table.n_max())));
    }
    Ok(())
}

impl SpatialGram {
    pub fn new(region: &Region, n_modes: usize, table: &SpectralTable, exec: Execution) -> Result<Self> {
        check_compat(region, table, n_modes)?;
        let coupling = ModalCoupling::new(region, n_modes);
        let h = table.grid.h();
        let pairs: Vec<(usize, usize)> = (1..=n_modes).flat_map(|n| (n..=n_modes).map(move |m| (n, m))).collect();
        let vals = par::map_slice(exec, &pairs, |&(n, m)| {
            if coupling.vanishes(n, m) {
                return 0.0;
            }
            let (vn, vm) = (&table.pair(n).v, &table.pair(m).v);
            FRAC_PI_2 * h * (0..coupling.nx).map(|i| vn[i] * vm[i] * coupling.entry(i, n, m)).sum::<f64>()
        });
        let mut w = DMatrix::zeros(n_modes, n_modes);
        for (&(n, m), v) in pairs.iter().zip(vals) {
            w[(n - 1, m - 1)] = v;
            w[(m - 1, n - 1)] = v;
        }
        let lambda = (1..=n_modes).map(|n| table.pair(n).lambda).collect();
        let mass = (1..=n_modes).map(|n| FRAC_PI_2 * table.normsq[n - 1]).collect();
        Ok(SpatialGram { n_modes, lambda, mass, w })
    }

    /// The Gram pair on the leading `n` modes at horizon `t`.
    pub fn at(&self, t: f64, n: usize, model: TimeModel) -> Result<GramPair> {
        if !(t > 0.0) {
            return Err(invalid(format!("T must be positive, got {t}")));
        }
        if n == 0 || n > self.n_modes {
            return Err(invalid(format!("mode count {n} outside 1..={}", self.n_modes)));
        }
        let mut g = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = self.w[(a, b)] * model.factor(self.lambda[a], self.lambda[b], t)?;
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        let m_t = (0..n)
            .map(|a| Ok(self.mass[a] * model.decay_sq(self.lambda[a], t)?))
            .collect::<Result<_>>()?;
        Ok(GramPair { t, m_t, g })
    }
}

/// Gram pair with closed-form time integrals.
pub fn assemble_gram(region: &Region, t: f64, n_modes: usize, table: &SpectralTable, exec: Execution) -> Result<GramPair> {
    SpatialGram::new(region, n_modes, table, exec)?.at(t, n_modes, TimeModel::Exact)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObsCost {
    Finite(f64),
    /// `G` has an eigenvalue below the whitening floor.
    Unobservable { min_eig: f64, floor: f64 },
}

impl ObsCost {
    pub fn value(self) -> f64 {
        match self {
            ObsCost::Finite(c) => c,
            ObsCost::Unobservable { .. } => f64::INFINITY,
        }
    }
}

/// Largest generalized eigenvalue of `(M_T, G)` via whitening of `G`.
pub fn obs_cost(gram: &GramPair) -> ObsCost {
    let n = gram.m_t.len();
    let trace = gram.g.trace();
    let floor = 1e-14 * trace.abs();
    let eig = SymmetricEigen::new(gram.g.clone());
    let min_eig = eig.eigenvalues.min();
    if !(trace > 0.0) || min_eig < floor {
        return ObsCost::Unobservable { min_eig, floor };
    }
    let q = &eig.eigenvectors;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for k in 0..n {
                s += q[(k, i)] * gram.m_t[k] * q[(k, j)];
            }
            let v = s / (eig.eigenvalues[i] * eig.eigenvalues[j]).sqrt();
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    ObsCost::Finite(SymmetricEigen::new(b).eigenvalues.max())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Growing,
    Saturating,
    DeadBand,
    Unobservable,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Growing => "growing",
            Classification::Saturating => "saturating",
            Classification::DeadBand => "dead-band",
            Classification::Unobservable => "unobservable",
        }
    }
}

pub const GROWING_RATIO: f64 = 10.0;
pub const SATURATING_RATIO: f64 = 2.0;

/// Classify by `C_{N_last} / C_{N_first}`.
pub fn classify(c_first: f64, c_last: f64) -> Classification {
    if !c_first.is_finite() || !c_last.is_finite() {
        return Classification::Unobservable;
    }
    let r = c_last / c_first;
    if r > GROWING_RATIO {
        Classification::Growing
    } else if r < SATURATING_RATIO {
        Classification::Saturating
    } else {
        Classification::DeadBand
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostSample {
    pub t: f64,
    pub n: usize,
    pub c: f64,
}

#[derive(Clone, Debug)]
pub struct CostCurve {
    pub samples: Vec<CostSample>,
    /// One entry per T: `(T, C_last / C_first, class)`.
    pub classes: Vec<(f64, f64, Classification)>,
    /// `(largest growing T, smallest saturating T above it)`.
    pub transition: Option<(f64, f64)>,
    /// No saturating T below the transition and no growing T above it.
    pub consistent: bool,
}

impl CostCurve {
    pub fn class_at(&self, t: f64) -> Option<Classification> {
        self.classes.iter().find(|c| (c.0 - t).abs() < 1e-12).map(|c| c.2)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,N,C,classification\n");
        for s in &self.samples {
            let class = self.class_at(s.t).map(|c| c.as_str()).unwrap_or("");
            out.push_str(&format!("{:.16e},{},{:.16e},{}\n", s.t, s.n, s.c, class));
        }
        out
    }
}

/// Parse `start:step:stop` (inclusive of `stop` up to rounding).
pub fn parse_t_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(invalid(format!("T grid must look like start:step:stop, got {spec:?}")));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad number {s:?} in T grid")));
    let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(start > 0.0 && step > 0.0 && stop >= start) {
        return Err(invalid(format!("T grid needs 0 < start <= stop and step > 0, got {spec:?}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(invalid("T grid has too many points"));
    }
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

pub fn min_time_scan(
    region: &Region,
    t_grid: &[f64],
    n_list: &[usize],
    table: &SpectralTable,
    exec: Execution,
) -> Result<CostCurve> {
    if t_grid.is_empty() || n_list.len() < 2 {
        return Err(invalid("scan needs at least one T and two mode counts"));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("T grid must be strictly ascending"));
    }
    let n_max = *n_list.iter().max().expect("non-empty");
    let spatial = SpatialGram::new(region, n_max, table, exec)?;
    let per_t = par::map_slice(exec, t_grid, |&t| -> Result<Vec<f64>> {
        n_list
            .iter()
            .map(|&n| Ok(obs_cost(&spatial.at(t, n, TimeModel::Exact)?).value()))
            .collect()
    });
    let mut samples = Vec::new();
    let mut classes = Vec::new();
    for (&t, cs) in t_grid.iter().zip(per_t) {
        let cs = cs?;
        for (&n, &c) in n_list.iter().zip(&cs) {
            samples.push(CostSample { t, n, c });
        }
        let (first, last) = (cs[0], cs[cs.len() - 1]);
        classes.push((t, last / first, classify(first, last)));
    }
    let last_growing = classes.iter().rposition(|c| c.2 == Classification::Growing);
    let transition = last_growing.and_then(|g| {
        classes[g + 1..]
            .iter()
            .find(|c| c.2 == Classification::Saturating)
            .map(|s| (classes[g].0, s.0))
    });
    let consistent = match transition {
        Some((tg, ts)) => classes.iter().all(|c| {
            !(c.0 < tg && c.2 == Classification::Saturating) && !(c.0 > ts && c.2 == Classification::Growing)
        }),
        None => false,
    };
    Ok(CostCurve { samples, classes, transition, consistent })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HumOptions {
    pub n_modes: usize,
    /// x-eigenstates per y-mode in the trial space. `None` picks the whole
    /// x-space for uncoupled modes and shrinks it for coupled blocks.
    pub basis_per_mode: Option<usize>,
    pub reg: f64,
    pub dt: f64,
    /// Relative terminal residual regarded as success.
    pub tol: f64,
}

impl Default for HumOptions {
    fn default() -> Self {
        HumOptions { n_modes: 30, basis_per_mode: None, reg: 1e-13, dt: 1e-3, tol: 1e-3 }
    }
}

/// Largest trial dimension of one coupled block under automatic sizing.
pub const AUTO_BLOCK_DIM: usize = 2048;
/// Smallest per-mode trial size under automatic sizing.
pub const AUTO_MIN_PER_MODE: usize = 64;

/// Trial functions `e_a = φ̂_a(x) sin(n_a y)` with `⟨e_a, e_b⟩ = δ_ab`.
#[derive(Clone, Debug)]
pub struct TrialBasis {
    pub n_modes: usize,
    /// Trial states per y-mode, possibly zero.
    pub per_mode: Vec<usize>,
    offsets: Vec<usize>,
    mode: Vec<usize>,
    pub lambda: Vec<f64>,
    /// Profiles scaled so that `(π/2) h Σ φ̂² = 1`.
    pub profiles: Vec<Vec<f64>>,
}

impl TrialBasis {
    pub fn new(grid: &Grid1D, per_mode: &[usize], exec: Execution) -> Result<Self> {
        let per = par::map_range(exec, per_mode.len(), |k| match per_mode[k] {
            0 => Ok(Vec::new()),
            size => mode_eigenbasis(k + 1, size, grid),
        });
        let scale = (1.0 / FRAC_PI_2).sqrt();
        let mut offsets = vec![0];
        let (mut lambda, mut profiles, mut mode) = (Vec::new(), Vec::new(), Vec::new());
        for (k, basis) in per.into_iter().enumerate() {
            for (l, mut v) in basis? {
                v.iter_mut().for_each(|x| *x *= scale);
                lambda.push(l);
                profiles.push(v);
                mode.push(k + 1);
            }
            offsets.push(lambda.len());
        }
        Ok(TrialBasis { n_modes: per_mode.len(), per_mode: per_mode.to_vec(), offsets, mode, lambda, profiles })
    }

    pub fn uniform(grid: &Grid1D, n_modes: usize, per_mode: usize, exec: Execution) -> Result<Self> {
        Self::new(grid, &vec![per_mode; n_modes], exec)
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn mode_of(&self, a: usize) -> usize {
        self.mode[a]
    }

    /// Trial indices belonging to y-mode `n`.
    pub fn range(&self, n: usize) -> std::ops::Range<usize> {
        self.offsets[n - 1]..self.offsets[n]
    }
}

/// Groups of y-modes linked by a nonvanishing coupling. x-only regions give
/// singletons.
pub fn mode_components(coupling: &ModalCoupling) -> Vec<Vec<usize>> {
    let n = coupling.n_modes;
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for a in 1..=n {
        for b in a + 1..=n {
            if !coupling.vanishes(a, b) {
                let (ra, rb) = (root(&mut parent, a - 1), root(&mut parent, b - 1));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for m in 0..n {
        let r = root(&mut parent, m);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(m + 1);
    }
    groups
}

/// One independent block of the HUM normal equations.
#[derive(Clone, Debug)]
pub struct HumBlock {
    pub modes: Vec<usize>,
    /// Global trial indices of the block rows.
    pub index: Vec<usize>,
    pub g: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// The HUM normal equations `(G + reg I) β = -g` in trial coordinates,
/// block diagonal over coupled mode groups.
#[derive(Clone, Debug)]
pub struct HumSystem {
    pub dim: usize,
    pub blocks: Vec<HumBlock>,
    pub reg: f64,
}

impl HumSystem {
    pub fn solve(&self, exec: Execution) -> Result<DVector<f64>> {
        let parts = par::map_slice(exec, &self.blocks, |b| {
            let n = b.g.nrows();
            let a = &b.g + DMatrix::identity(n, n) * self.reg;
            a.cholesky()
                .map(|c| -c.solve(&b.rhs))
                .ok_or_else(|| Error::Numerical(format!("HUM block for modes {:?} is not positive definite", b.modes)))
        });
        let mut beta = DVector::zeros(self.dim);
        for (b, part) in self.blocks.iter().zip(parts) {
            for (&i, v) in b.index.iter().zip(part?.iter()) {
                beta[i] = *v;
            }
        }
        Ok(beta)
    }

    fn local(b: &HumBlock, beta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(b.index.len(), b.index.iter().map(|&i| beta[i]))
    }

    /// `βᵀGβ`, the squared control norm.
    pub fn energy(&self, beta: &DVector<f64>) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let x = Self::local(b, beta);
                x.dot(&(&b.g * &x))
            })
            .sum()
    }

    /// `βᵀGβ + reg⁻¹ ‖g + Gβ‖²`.
    pub fn objective(&self, beta: &DVector<f64>) -> f64 {
        let r = self.predicted_residual(beta);
        self.energy(beta) + r * r / self.reg
    }

    /// Residual predicted in the trial space, `‖g + Gβ‖`.
    pub fn predicted_residual(&self, beta: &DVector<f64>) -> f64 {
        self.blocks
            .iter()
            .map(|b| (&b.rhs + &b.g * Self::local(b, beta)).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest `λ_max / λ_min` over the blocks.
    pub fn conditioning(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let e = SymmetricEigen::new(b.g.clone()).eigenvalues;
                (e.max() + self.reg) / (e.min().max(0.0) + self.reg)
            })
            .fold(1.0, f64::max)
    }
}

/// The synthesized control, usable as a solver source.
#[derive(Clone, Debug)]
pub struct HumForcing {
    pub basis: TrialBasis,
    pub beta: Vec<f64>,
    pub coupling: ModalCoupling,
    pub dt: f64,
    pub steps: usize,
}

impl HumForcing {
    /// Unmasked control profiles `c_m(x)` for the half step `step + 1/2`, so
    /// the control is `u = 1_ω Σ_m c_m(x) sin(m y)`.
    pub fn control_modes(&self, step: usize, out: &mut [f64]) {
        let nx = self.coupling.nx;
        out.iter_mut().for_each(|v| *v = 0.0);
        let power = (self.steps - 1 - step) as i32;
        for (a, &b) in self.beta.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let x = 0.5 * self.basis.lambda[a] * self.dt;
            let q = 1.0 / (1.0 + x);
            let c = b * q * ((1.0 - x) * q).powi(power);
            let m = self.basis.mode_of(a);
            let dst = &mut out[(m - 1) * nx..m * nx];
            for (d, &p) in dst.iter_mut().zip(&self.basis.profiles[a]) {
                *d += c * p;
            }
        }
    }
}

impl Forcing for HumForcing {
    fn fill(&self, step: usize, _: f64, out: &mut [f64]) {
        let mut c = vec![0.0; out.len()];
        self.control_modes(step, &mut c);
        self.coupling.apply(&c, out);
    }

    fn is_zero(&self) -> bool {
        self.beta.iter().all(|&b| b == 0.0)
    }
}

#[derive(Clone, Debug)]
pub struct HumResult {
    pub forcing: HumForcing,
    pub system: HumSystem,
    /// `‖u‖_{L²((0,T)×ω)}`.
    pub control_norm: f64,
    pub predicted_residual: f64,
    /// `‖f(T)‖` from re-simulation with the solver.
    pub residual: f64,
    pub f0_norm: f64,
    pub final_state: ModalState,
    pub converged: bool,
    /// Worst block `λ_max / λ_min` of `G`, computed only when not converged.
    pub conditioning: Option<f64>,
}

/// Assemble the HUM blocks on `region` for the trial basis and CN time grid.
/// Each entry of `groups` becomes one block.
#[allow(clippy::too_many_arguments)]
pub fn hum_system(
    t: f64,
    f0: &ModalState,
    basis: &TrialBasis,
    coupling: &ModalCoupling,
    groups: &[Vec<usize>],
    grid: &Grid1D,
    dt: f64,
    reg: f64,
    exec: Execution,
) -> Result<HumSystem> {
    let (steps, dt) = solver::step_count(t, dt)?;
    let nx = grid.count();
    let h = grid.h();
    // With φ̂ = φ √(2/π), (π/2) h Σ S φ̂_a φ̂_b = h Σ S φ_a φ_b.
    let phi = |n: usize| {
        let r = basis.range(n);
        DMatrix::from_fn(nx, r.len(), |i, c| basis.profiles[r.start + c][i] * FRAC_PI_2.sqrt())
    };
    let mut blocks = Vec::with_capacity(groups.len());
    for modes in groups {
        let index: Vec<usize> = modes.iter().flat_map(|&n| basis.range(n)).collect();
        let pairs: Vec<(usize, usize)> = modes
            .iter()
            .enumerate()
            .flat_map(|(p, &n)| modes[p..].iter().map(move |&m| (n, m)))
            .filter(|&(n, m)| !coupling.vanishes(n, m))
            .collect();
        let mats = par::map_slice(exec, &pairs, |&(n, m)| {
            let mut right = phi(m);
            for i in 0..nx {
                right.row_mut(i).scale_mut(h * coupling.entry(i, n, m));
            }
            phi(n).transpose() * right
        });
        let dim = index.len();
        let local = |n: usize| -> usize {
            modes.iter().take_while(|&&k| k != n).map(|&k| basis.range(k).len()).sum()
        };
        let mut g = DMatrix::zeros(dim, dim);
        for (&(n, m), block) in pairs.iter().zip(mats) {
            let (on, om) = (local(n), local(m));
            let (rn, rm) = (basis.range(n), basis.range(m));
            for a in 0..rn.len() {
                for b in 0..rm.len() {
                    let f = cn_factor(basis.lambda[rn.start + a], basis.lambda[rm.start + b], dt, steps);
                    let v = block[(a, b)] * f;
                    g[(on + a, om + b)] = v;
                    g[(om + b, on + a)] = v;
                }
            }
        }
        let rhs = DVector::from_iterator(
            dim,
            index.iter().map(|&a| {
                let n = basis.mode_of(a);
                if n > f0.n_modes {
                    return 0.0;
                }
                let x = 0.5 * basis.lambda[a] * dt;
                let r = (1.0 - x) / (1.0 + x);
                let proj = FRAC_PI_2 * h * f0.mode(n).iter().zip(&basis.profiles[a]).map(|(u, v)| u * v).sum::<f64>();
                r.powi(steps as i32) * proj
            }),
        );
        blocks.push(HumBlock { modes: modes.clone(), index, g, rhs });
    }
    Ok(HumSystem { dim: basis.len(), blocks, reg })
}

/// Tikhonov-regularized HUM control on `region` driving `f0` toward zero at `t`.
/// Mode groups on which `f0` vanishes get no trial space and no control.
pub fn hum_control(region: &Region, t: f64, f0: &ModalState, opts: &HumOptions, exec: Execution) -> Result<HumResult> {
    if !(opts.reg > 0.0) {
        return Err(invalid(format!("regularization must be positive, got {}", opts.reg)));
    }
    if f0.n_modes != opts.n_modes {
        return Err(invalid(format!("initial state has {} modes, expected {}", f0.n_modes, opts.n_modes)));
    }
    if opts.basis_per_mode == Some(0) {
        return Err(invalid("trial basis needs at least one state per mode"));
    }
    if region.grid.nx - 2 != f0.nx {
        return Err(invalid("region grid and state grid disagree"));
    }
    let grid = Grid1D::new(f0.nx)?;
    let (steps, dt) = solver::step_count(t, opts.dt)?;
    let coupling = ModalCoupling::new(region, opts.n_modes);
    let groups: Vec<Vec<usize>> = mode_components(&coupling)
        .into_iter()
        .filter(|g| g.iter().any(|&n| f0.mode(n).iter().any(|&v| v != 0.0)))
        .collect();
    let mut per_mode = vec![0; opts.n_modes];
    for g in &groups {
        let auto = (AUTO_BLOCK_DIM / g.len()).max(AUTO_MIN_PER_MODE);
        let k = opts.basis_per_mode.unwrap_or(auto).min(grid.count());
        g.iter().for_each(|&n| per_mode[n - 1] = k);
    }
    let basis = TrialBasis::new(&grid, &per_mode, exec)?;
    let system = hum_system(t, f0, &basis, &coupling, &groups, &grid, dt, opts.reg, exec)?;
    let beta = system.solve(exec)?;
    let control_norm = system.energy(&beta).max(0.0).sqrt();
    let predicted_residual = system.predicted_residual(&beta);
    let forcing = HumForcing { basis, beta: beta.iter().copied().collect(), coupling, dt, steps };
    let final_state = solver::evolve_with(f0, t, dt, &forcing, exec, |_, _, _, _| Ok(()))?;
    let residual = solver::l2_norm_sq(&final_state, &grid).sqrt();
    let f0_norm = solver::l2_norm_sq(f0, &grid).sqrt();
    let converged = residual <= opts.tol * f0_norm;
    let conditioning = if converged { None } else { Some(system.conditioning()) };
    Ok(HumResult {
        forcing,
        system,
        control_norm,
        predicted_residual,
        residual,
        f0_norm,
        final_state,
        converged,
        conditioning,
    })
}
