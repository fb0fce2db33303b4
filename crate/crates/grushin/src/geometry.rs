//! Control regions on `Ω = (-1, 1) × (0, π)`, paths, critical abscissas and
//! the smooth cutoff used to glue two controlled solutions.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par::{self, Execution};

/// Uniform grid on the closed rectangle, boundary nodes included.
///
/// Node `(i, j)` sits at `x = -1 + 2i/(nx-1)`, `y = π j/(ny-1)`; fields are
/// stored row-major with index `j * nx + i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
}

impl Default for Grid2D {
    fn default() -> Self {
        Grid2D { nx: 801, ny: 401 }
    }
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 5 || nx.is_multiple_of(2) {
            return Err(invalid(format!("nx must be odd and >= 5, got {nx}")));
        }
        if ny < 3 {
            return Err(invalid(format!("ny must be >= 3, got {ny}")));
        }
        Ok(Grid2D { nx, ny })
    }

    pub fn hx(&self) -> f64 {
        2.0 / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        PI / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - ((self.nx - 1) / 2) as f64) * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Grid with both spacings halved.
    pub fn refined(&self) -> Grid2D {
        Grid2D { nx: 2 * self.nx - 1, ny: 2 * self.ny - 1 }
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && i + 1 < self.nx && j > 0 && j + 1 < self.ny
    }

    pub fn nearest_row(&self, y: f64) -> usize {
        ((y / self.hy()).round().max(0.0) as usize).min(self.ny - 1)
    }

    /// Grid L² norm `(hx hy Σ f²)^{1/2}`.
    pub fn l2_norm(&self, field: &[f64]) -> f64 {
        (self.hx() * self.hy() * field.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// A polyline from the bottom edge `y = 0` to the top edge `y = π`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub samples: Vec<(f64, f64)>,
}

impl Path {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(invalid("a path needs at least two samples"));
        }
        let (x0, y0) = samples[0];
        let (x1, y1) = samples[samples.len() - 1];
        if y0.abs() > 1e-12 || (y1 - PI).abs() > 1e-12 {
            return Err(invalid("path must start on y = 0 and end on y = π"));
        }
        if x0.abs() >= 1.0 || x1.abs() >= 1.0 {
            return Err(invalid("path endpoints must lie in (-1, 1)"));
        }
        for &(x, y) in &samples {
            if !(x.abs() <= 1.0 && (-1e-12..=PI + 1e-12).contains(&y)) {
                return Err(invalid(format!("path sample ({x}, {y}) leaves the closed rectangle")));
            }
        }
        Ok(Path { samples })
    }

    pub fn vertical(x: f64) -> Result<Self> {
        Path::new(vec![(x, 0.0), (x, PI)])
    }

    /// A path in the spirit of the positive-result figure: it bulges left to
    /// `x = -0.488` and otherwise stays close to the degeneracy line.
    pub fn fig4() -> Self {
        Path {
            samples: vec![
                (-0.30, 0.0),
                (-0.45, 0.5),
                (-0.488, 1.0),
                (-0.40, 1.5),
                (-0.10, 1.9),
                (0.20, 2.1),
                (0.40, 2.6),
                (0.45, PI),
            ],
        }
    }

    pub fn max_gap(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Distance from `(x, y)` to the polyline.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        self.samples
            .windows(2)
            .map(|w| segment_distance(w[0], w[1], (x, y)).0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Distance from `p` to segment `[a, b]` and the cross product sign of `p`
/// relative to the direction `b - a` (negative means right of the segment).
fn segment_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    let cross = dx * (p.1 - a.1) - dy * (p.0 - a.0);
    (((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt(), cross)
}

/// `max_s |x(γ(s))|` over the samples.
pub fn critical_abscissa(path: &Path) -> f64 {
    path.samples.iter().fold(0.0, |a, &(x, _)| a.max(x.abs()))
}

fn validate_corridor(gamma1: &[f64], gamma2: &[f64]) -> Result<()> {
    if gamma1.len() != gamma2.len() || gamma1.len() < 2 {
        return Err(invalid("corridor boundaries need matching sample counts >= 2"));
    }
    for (k, (&g1, &g2)) in gamma1.iter().zip(gamma2).enumerate() {
        if !(g1 < g2) {
            return Err(invalid(format!("invalid corridor: gamma1 >= gamma2 at sample {k}")));
        }
        if g1 <= -1.0 || g2 >= 1.0 {
            return Err(invalid(format!("corridor sample {k} leaves (-1, 1)")));
        }
    }
    Ok(())
}

/// `max(max γ₂⁻, max γ₁⁺)`.
pub fn corridor_critical_a(gamma1: &[f64], gamma2: &[f64]) -> Result<f64> {
    validate_corridor(gamma1, gamma2)?;
    let neg = gamma2.iter().fold(0.0f64, |a, &g| a.max((-g).max(0.0)));
    let pos = gamma1.iter().fold(0.0f64, |a, &g| a.max(g.max(0.0)));
    Ok(neg.max(pos))
}

/// The midline path `((γ̃₁ + γ̃₂)/2, s)` with `γ̃₁ = max(γ₁, -a-ε)` and
/// `γ̃₂ = min(γ₂, a+ε)`; samples are taken at the corridor's y-samples.
pub fn corridor_midline_path(gamma1: &[f64], gamma2: &[f64], eps: f64) -> Result<Path> {
    let a = corridor_critical_a(gamma1, gamma2)?;
    let m = gamma1.len();
    let samples = (0..m)
        .map(|k| {
            let g1 = gamma1[k].max(-a - eps);
            let g2 = gamma2[k].min(a + eps);
            (0.5 * (g1 + g2), PI * k as f64 / (m - 1) as f64)
        })
        .collect();
    Path::new(samples)
}

/// Linear interpolation of samples on a uniform grid of `[0, π]`.
fn interp_uniform(samples: &[f64], y: f64) -> f64 {
    let m = samples.len();
    let s = (y / PI).clamp(0.0, 1.0) * (m - 1) as f64;
    let k = (s.floor() as usize).min(m - 2);
    let t = s - k as f64;
    samples[k] * (1.0 - t) + samples[k + 1] * t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionKind {
    /// `(x_min, x_max) × (0, π)`.
    Strip { x_min: f64, x_max: f64 },
    /// `((-1, -a) ∪ (a, 1)) × (0, π)`.
    TwoStrips { a: f64 },
    /// `{γ₁(y) < x < γ₂(y)}` with boundaries sampled uniformly in y.
    Corridor { gamma1: Vec<f64>, gamma2: Vec<f64> },
    /// Ω minus the closed rectangle `{|x| <= x_half, |y - y_center| <= y_half}`.
    RectangleComplement { x_half: f64, y_center: f64, y_half: f64 },
    /// Points at distance `< eps` from the path.
    PathNeighborhood { path: Path, eps: f64 },
    /// Node membership given directly on a grid.
    ExplicitMask { nx: usize, ny: usize, mask: Vec<bool> },
}

impl RegionKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegionKind::Strip { x_min, x_max } => {
                if !(-1.0 <= *x_min && x_min < x_max && *x_max <= 1.0) {
                    return Err(invalid(format!("invalid strip bounds ({x_min}, {x_max})")));
                }
            }
            RegionKind::TwoStrips { a } => {
                if !(0.0..1.0).contains(a) {
                    return Err(invalid(format!("two-strips half gap must lie in [0, 1), got {a}")));
                }
            }
            RegionKind::Corridor { gamma1, gamma2 } => validate_corridor(gamma1, gamma2)?,
            RegionKind::RectangleComplement { x_half, y_half, .. } => {
                if !(*x_half >= 0.0 && *y_half >= 0.0) {
                    return Err(invalid("rectangle half sizes must be nonnegative"));
                }
            }
            RegionKind::PathNeighborhood { path, eps } => {
                Path::new(path.samples.clone())?;
                if !(*eps > 0.0) {
                    return Err(invalid("path neighborhood needs eps > 0"));
                }
            }
            RegionKind::ExplicitMask { nx, ny, mask } => {
                Grid2D::new(*nx, *ny)?;
                if mask.len() != nx * ny {
                    return Err(invalid("explicit mask length does not match its grid"));
                }
            }
        }
        Ok(())
    }

    /// Membership of an interior point.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            RegionKind::Strip { x_min, x_max } => *x_min < x && x < *x_max,
            RegionKind::TwoStrips { a } => x.abs() > *a,
            RegionKind::Corridor { gamma1, gamma2 } => {
                interp_uniform(gamma1, y) < x && x < interp_uniform(gamma2, y)
            }
            RegionKind::RectangleComplement { x_half, y_center, y_half } => {
                !(x.abs() <= *x_half && (y - y_center).abs() <= *y_half)
            }
            RegionKind::PathNeighborhood { path, eps } => path.distance(x, y) < *eps,
            RegionKind::ExplicitMask { nx, ny, mask } => {
                let g = Grid2D { nx: *nx, ny: *ny };
                let i = (((x + 1.0) / g.hx()).round().max(0.0) as usize).min(nx - 1);
                let j = g.nearest_row(y);
                mask[g.idx(i, j)]
            }
        }
    }
}

/// A control region with its rasterized mask. Nodes on the boundary of Ω are
/// never inside, so the mask describes an open set.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub kind: RegionKind,
    pub grid: Grid2D,
    pub mask: Vec<bool>,
}

impl Region {
    pub fn new(kind: RegionKind, grid: Grid2D) -> Result<Self> {
        kind.validate()?;
        if let RegionKind::ExplicitMask { nx, ny, .. } = &kind {
            if (*nx, *ny) != (grid.nx, grid.ny) {
                return Err(invalid("explicit mask grid differs from the requested grid"));
            }
        }
        let mut mask = vec![false; grid.len()];
        for j in 1..grid.ny - 1 {
            for i in 1..grid.nx - 1 {
                mask[grid.idx(i, j)] = kind.contains(grid.x(i), grid.y(j));
            }
        }
        Ok(Region { kind, grid, mask })
    }

    pub fn full(grid: Grid2D) -> Self {
        Region::new(RegionKind::Strip { x_min: -1.0, x_max: 1.0 }, grid).expect("full strip is valid")
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn contains_node(&self, i: usize, j: usize) -> bool {
        self.mask[self.grid.idx(i, j)]
    }

    /// True when membership depends on x only (away from the y boundary rows).
    pub fn is_x_only(&self) -> bool {
        let g = self.grid;
        (1..g.nx - 1).all(|i| {
            let first = self.mask[g.idx(i, 1)];
            (2..g.ny - 1).all(|j| self.mask[g.idx(i, j)] == first)
        })
    }

    /// PGM (P5) image, 255 inside and 0 outside, top row = largest y.
    pub fn to_pgm(&self) -> Vec<u8> {
        mask_to_pgm(&self.mask, self.grid)
    }
}

pub fn mask_to_pgm(mask: &[bool], grid: Grid2D) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    for j in (0..grid.ny).rev() {
        for i in 0..grid.nx {
            out.push(if mask[grid.idx(i, j)] { 255 } else { 0 });
        }
    }
    out
}

/// Largest `a` such that the open segment `{(x, y0) : |x| < a}` misses the
/// closure of the region, measured on the row nearest `y0` with a half-cell
/// margin. Returns 1 when the row is empty.
pub fn segment_clearance(region: &Region, y0: f64) -> Result<f64> {
    if !(y0 > 0.0 && y0 < PI) {
        return Err(invalid(format!("y0 must lie in (0, π), got {y0}")));
    }
    let g = region.grid;
    let j = g.nearest_row(y0);
    let nearest = (0..g.nx)
        .filter(|&i| region.contains_node(i, j))
        .map(|i| g.x(i).abs())
        .fold(f64::INFINITY, f64::min);
    if nearest.is_infinite() {
        return Ok(1.0);
    }
    Ok((nearest - 0.5 * g.hx()).max(0.0))
}

/// Smooth cutoff: 0 left of the path tube, 1 right of it.
#[derive(Clone, Debug)]
pub struct CutoffField {
    pub grid: Grid2D,
    pub eps: f64,
    pub theta: Vec<f64>,
    /// Nodes where a first or second central difference of θ is nonzero.
    pub gradient_support: Vec<bool>,
    /// `ω₀`: nodes at distance `< eps` from the path.
    pub tube: Vec<bool>,
}

impl CutoffField {
    /// Central-difference derivatives `(θx, θy, θxx, θyy)`, zero on the boundary.
    pub fn derivatives(&self) -> [Vec<f64>; 4] {
        let g = self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let t = &self.theta;
        let mut d = [vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]];
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let k = g.idx(i, j);
                let (e, w, n, s) = (t[k + 1], t[k - 1], t[k + g.nx], t[k - g.nx]);
                d[0][k] = (e - w) / (2.0 * hx);
                d[1][k] = (n - s) / (2.0 * hy);
                d[2][k] = (e - 2.0 * t[k] + w) / (hx * hx);
                d[3][k] = (n - 2.0 * t[k] + s) / (hy * hy);
            }
        }
        d
    }

    /// Number of gradient-support nodes outside the tube.
    pub fn support_violations(&self) -> usize {
        self.gradient_support.iter().zip(&self.tube).filter(|(&s, &t)| s && !t).count()
    }
}

/// Build the cutoff for `path` with tube radius `eps`.
///
/// The path is extended vertically past both edges, rasterized as a barrier on
/// a vertically padded grid, and the component containing the bottom-right
/// corner is flood filled. Barrier nodes are assigned to a side by the
/// orientation of their nearest segment. The indicator is then averaged with
/// the bump `(1 - (r/R)²)⁴`, `R = eps/2`; windows that see a single side give
/// exactly 0 or 1.
pub fn build_cutoff(path: &Path, eps: f64, grid: Grid2D, exec: Execution) -> Result<CutoffField> {
    if !(eps > 0.0) {
        return Err(invalid("cutoff needs eps > 0"));
    }
    let a = critical_abscissa(path);
    if a + eps >= 1.0 {
        return Err(Error::Geometry(format!(
            "tube of radius {eps} around the path exits Ω horizontally (max |x| = {a})"
        )));
    }
    let (hx, hy) = (grid.hx(), grid.hy());
    let radius = 0.5 * eps;
    if radius < hx.max(hy) {
        return Err(invalid(format!("mollifier radius {radius} is below the grid spacing")));
    }
    let pad = (2.0 * eps / hy).ceil() as usize + 1;
    let rows = grid.ny + 2 * pad;
    let nx = grid.nx;
    let y_of = |je: usize| (je as f64 - pad as f64) * hy;

    let mut ext = path.samples.clone();
    let (x0, _) = ext[0];
    let (x1, _) = ext[ext.len() - 1];
    let reach = (pad + 2) as f64 * hy;
    ext.insert(0, (x0, -reach));
    ext.push((x1, PI + reach));

    let thickness = hx.max(hy);
    let mut barrier_dist = vec![f64::INFINITY; nx * rows];
    let mut barrier_right = vec![false; nx * rows];
    for w in ext.windows(2) {
        let (p, q) = (w[0], w[1]);
        let i_lo = (((p.0.min(q.0) - thickness + 1.0) / hx).floor().max(0.0)) as usize;
        let i_hi = ((((p.0.max(q.0) + thickness + 1.0) / hx).ceil()) as usize).min(nx - 1);
        let j_lo = (((p.1.min(q.1) - thickness) / hy + pad as f64).floor().max(0.0)) as usize;
        let j_hi = ((((p.1.max(q.1) + thickness) / hy + pad as f64).ceil()) as usize).min(rows - 1);
        for je in j_lo..=j_hi {
            for i in i_lo..=i_hi {
                let (d, cross) = segment_distance(p, q, (grid.x(i), y_of(je)));
                let k = je * nx + i;
                if d <= thickness && d < barrier_dist[k] {
                    barrier_dist[k] = d;
                    barrier_right[k] = cross <= 0.0;
                }
            }
        }
    }
    let is_barrier = |k: usize| barrier_dist[k].is_finite();

    let right_seed = nx - 1;
    let left_seed = 0;
    let mut filled = vec![false; nx * rows];
    let mut queue = VecDeque::new();
    if is_barrier(right_seed) || is_barrier(left_seed) {
        return Err(Error::Geometry("flood-fill seed lies on the path".into()));
    }
    filled[right_seed] = true;
    queue.push_back(right_seed);
    while let Some(k) = queue.pop_front() {
        let (i, je) = (k % nx, k / nx);
        let mut visit = |n: usize| {
            if !filled[n] && !is_barrier(n) {
                filled[n] = true;
                queue.push_back(n);
            }
        };
        if i > 0 {
            visit(k - 1);
        }
        if i + 1 < nx {
            visit(k + 1);
        }
        if je > 0 {
            visit(k - nx);
        }
        if je + 1 < rows {
            visit(k + nx);
        }
    }
    if filled[left_seed] {
        return Err(Error::Geometry("path does not separate left from right (flood fill leaked)".into()));
    }
    let indicator: Vec<u8> = (0..nx * rows)
        .map(|k| (filled[k] || (is_barrier(k) && barrier_right[k])) as u8)
        .collect();

    // Summed-area table for the purity test of each window.
    let mut sat = vec![0u32; (nx + 1) * (rows + 1)];
    for je in 0..rows {
        for i in 0..nx {
            sat[(je + 1) * (nx + 1) + i + 1] = indicator[je * nx + i] as u32 + sat[je * (nx + 1) + i + 1]
                + sat[(je + 1) * (nx + 1) + i]
                - sat[je * (nx + 1) + i];
        }
    }
    let rect_sum = |i0: usize, i1: usize, j0: usize, j1: usize| -> u32 {
        sat[(j1 + 1) * (nx + 1) + i1 + 1] + sat[j0 * (nx + 1) + i0] - sat[j0 * (nx + 1) + i1 + 1] - sat[(j1 + 1) * (nx + 1) + i0]
    };

    let ri = (radius / hx).floor() as isize;
    let rj = (radius / hy).floor() as isize;
    let mut window = Vec::new();
    for dj in -rj..=rj {
        for di in -ri..=ri {
            let r2 = ((di as f64 * hx).powi(2) + (dj as f64 * hy).powi(2)) / (radius * radius);
            if r2 < 1.0 {
                window.push((di, dj, (1.0 - r2).powi(4)));
            }
        }
    }

    let mut theta = vec![0.0; grid.len()];
    par::for_each_chunk(exec, &mut theta, nx, |j, row| {
        let je = j + pad;
        let j0 = je - rj as usize;
        let j1 = je + rj as usize;
        for (i, out) in row.iter_mut().enumerate() {
            let i0 = (i as isize - ri).max(0) as usize;
            let i1 = ((i as isize + ri) as usize).min(nx - 1);
            let area = ((i1 - i0 + 1) * (j1 - j0 + 1)) as u32;
            let s = rect_sum(i0, i1, j0, j1);
            // Clamped columns repeat edge values, which are pure on both sides
            // because the tube stays inside Ω.
            if s == 0 {
                *out = 0.0;
            } else if s == area {
                *out = 1.0;
            } else {
                let mut num = 0.0;
                let mut den = 0.0;
                for &(di, dj, w) in &window {
                    let ii = (i as isize + di).clamp(0, nx as isize - 1) as usize;
                    let jj = (je as isize + dj) as usize;
                    den += w;
                    if indicator[jj * nx + ii] == 1 {
                        num += w;
                    }
                }
                *out = num / den;
            }
        }
    });

    let tube_rows: Vec<Vec<bool>> = par::map_range(exec, grid.ny, |j| {
        (0..nx).map(|i| path.distance(grid.x(i), grid.y(j)) < eps).collect()
    });
    let tube: Vec<bool> = tube_rows.into_iter().flatten().collect();

    let mut gradient_support = vec![false; grid.len()];
    for j in 1..grid.ny - 1 {
        for i in 1..nx - 1 {
            let k = grid.idx(i, j);
            let c = theta[k];
            gradient_support[k] =
                theta[k + 1] != c || theta[k - 1] != c || theta[k + nx] != c || theta[k - nx] != c;
        }
    }
    Ok(CutoffField { grid, eps, theta, gradient_support, tube })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes() {
        let g = Grid2D::default();
        assert_eq!(g.x(400), 0.0);
        assert_eq!(g.x(0), -1.0);
        assert_eq!(g.x(800), 1.0);
        assert!((g.y(400) - PI).abs() < 1e-15);
    }

    #[test]
    fn strip_region_is_x_only() {
        let g = Grid2D::new(41, 21).unwrap();
        let r = Region::new(RegionKind::TwoStrips { a: 0.5 }, g).unwrap();
        assert!(r.is_x_only());
        let c = Region::new(RegionKind::RectangleComplement { x_half: 0.3, y_center: 1.0, y_half: 0.2 }, g).unwrap();
        assert!(!c.is_x_only());
    }

    #[test]
    fn pgm_header() {
        let g = Grid2D::new(5, 3).unwrap();
        let r = Region::full(g);
        let pgm = r.to_pgm();
        assert!(pgm.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(pgm.len(), 11 + 15);
        assert_eq!(pgm[11 + 5 + 2], 255);
        assert_eq!(pgm[11], 0);
    }

    #[test]
    fn corridor_checks_order() {
        assert!(corridor_critical_a(&[0.1, 0.2], &[0.0, 0.5]).is_err());
    }
}
