//! Planar domains, polynomial norms and the Runge counterexample family
//! behind the negative result.
//!
//! Every domain here is a finite union of polar rectangles
//! `{r₁ <= |z| <= r₂, θ₁ <= arg z <= θ₂}`, which makes sampling and
//! membership tests exact.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::par::{self, Execution};
use crate::spectral::{w_profile, SpectralTable};

pub type C64 = Complex64;

pub const BOUNDARY_SAMPLES: usize = 4096;
pub const INTERIOR_SAMPLES: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DomainKind {
    /// Open disk `|z| < radius`.
    Disk { radius: f64 },
    /// `{|z| < 1, ||arg z| - y0| > δ/2} ∪ D(0, e^{-(1-2ε)a'²/2})`.
    U { y0: f64, delta: f64, a_prime: f64, eps: f64 },
    /// Closed union of the `D_x` over `x ∈ [-1, 1]`: a whole ring from the
    /// strips `|x| >= a'` and a partial ring from `|x| < a'`.
    K { y0: f64, delta: f64, a_prime: f64, eps: f64, t: f64 },
    /// `{e^{-T-(1-ε)x²/2} < |z| < e^{-(1-ε)x²/2}}`, cut by the slit
    /// `||arg z| - y0| <= δ` when `|x| < a'`.
    Dx { x: f64, y0: f64, delta: f64, a_prime: f64, eps: f64, t: f64 },
}

/// Polar rectangle; `full` means the whole angular range.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Sector {
    r1: f64,
    r2: f64,
    th1: f64,
    th2: f64,
    full: bool,
}

impl Sector {
    fn ring(r1: f64, r2: f64) -> Self {
        Sector { r1, r2, th1: -PI, th2: PI, full: true }
    }

    fn area(&self) -> f64 {
        0.5 * (self.r2 * self.r2 - self.r1 * self.r1) * (self.th2 - self.th1)
    }

    /// Outer and inner arcs, plus the two rays unless the sector is a ring.
    fn edges(&self) -> Vec<Edge> {
        let mut e = vec![Edge::Arc { r: self.r2, th1: self.th1, th2: self.th2 }];
        if self.r1 > 0.0 {
            e.push(Edge::Arc { r: self.r1, th1: self.th1, th2: self.th2 });
        }
        if !self.full {
            e.push(Edge::Ray { th: self.th1, r1: self.r1, r2: self.r2 });
            e.push(Edge::Ray { th: self.th2, r1: self.r1, r2: self.r2 });
        }
        e
    }
}

#[derive(Clone, Copy, Debug)]
enum Edge {
    Arc { r: f64, th1: f64, th2: f64 },
    Ray { th: f64, r1: f64, r2: f64 },
}

impl Edge {
    fn length(&self) -> f64 {
        match *self {
            Edge::Arc { r, th1, th2 } => r * (th2 - th1),
            Edge::Ray { r1, r2, .. } => r2 - r1,
        }
    }

    fn point(&self, s: f64) -> C64 {
        match *self {
            Edge::Arc { r, th1, th2 } => C64::from_polar(r, th1 + s * (th2 - th1)),
            Edge::Ray { th, r1, r2 } => C64::from_polar(r1 + s * (r2 - r1), th),
        }
    }
}

/// Angular arcs `{||θ| - y0| > half}` as two intervals, the second one
/// wrapping through `π`.
fn slit_complement(y0: f64, half: f64) -> [(f64, f64); 2] {
    [(-(y0 - half), y0 - half), (y0 + half, TAU - y0 - half)]
}

fn slit_distance(z: C64, y0: f64) -> f64 {
    (z.arg().abs() - y0).abs()
}

/// Radial interval `[a, b]` minus `[c, d]`.
fn radial_difference(a: f64, b: f64, c: f64, d: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    if a < c.min(b) {
        out.push((a, c.min(b)));
    }
    if d.max(a) < b {
        out.push((d.max(a), b));
    }
    out
}

#[derive(Clone, Debug)]
pub struct PlanarDomain {
    pub kind: DomainKind,
    pub boundary: Vec<C64>,
    pub interior: Vec<C64>,
    /// Area weights of the interior samples.
    pub weights: Vec<f64>,
}

impl DomainKind {
    fn validate(&self) -> Result<()> {
        let slit = |y0: f64, delta: f64, a: f64, eps: f64, half: f64| -> Result<()> {
            if !(y0 > 0.0 && y0 < PI) {
                return Err(invalid(format!("y0 must lie in (0, π), got {y0}")));
            }
            if !(delta > 0.0) {
                return Err(invalid(format!("delta must be positive, got {delta}")));
            }
            if !(a > 0.0 && a < 1.0) {
                return Err(invalid(format!("a' must lie in (0, 1), got {a}")));
            }
            if !(eps > 0.0 && eps < 0.5) {
                return Err(invalid(format!("eps must lie in (0, 1/2), got {eps}")));
            }
            if y0 - half <= 0.0 || y0 + half >= PI {
                return Err(Error::Geometry(format!(
                    "slit |arg z| ∈ [{}, {}] leaves (0, π); the outer part would split off the disk",
                    y0 - half,
                    y0 + half
                )));
            }
            Ok(())
        };
        match *self {
            DomainKind::Disk { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(invalid(format!("disk radius must be positive, got {radius}")));
                }
                Ok(())
            }
            DomainKind::U { y0, delta, a_prime, eps } => slit(y0, delta, a_prime, eps, 0.5 * delta),
            DomainKind::K { y0, delta, a_prime, eps, t } | DomainKind::Dx { y0, delta, a_prime, eps, t, .. } => {
                slit(y0, delta, a_prime, eps, delta)?;
                if !(t > 0.0) {
                    return Err(invalid(format!("T must be positive, got {t}")));
                }
                if let DomainKind::Dx { x, .. } = *self {
                    if !(x > -1.0 && x < 1.0) {
                        return Err(invalid(format!("x must lie in (-1, 1), got {x}")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Disjoint polar rectangles whose union is the closure.
    fn sectors(&self) -> Vec<Sector> {
        match *self {
            DomainKind::Disk { radius } => vec![Sector::ring(0.0, radius)],
            DomainKind::U { y0, delta, a_prime, eps } => {
                let r_in = u_inner_radius(a_prime, eps);
                let mut s = vec![Sector::ring(0.0, r_in)];
                for (th1, th2) in slit_complement(y0, 0.5 * delta) {
                    s.push(Sector { r1: r_in, r2: 1.0, th1, th2, full: false });
                }
                s
            }
            DomainKind::K { y0, delta, a_prime, eps, t } => {
                let (ra, rb) = ((-t - 0.5 * (1.0 - eps)).exp(), (-0.5 * (1.0 - eps) * a_prime * a_prime).exp());
                let rc = (-t - 0.5 * (1.0 - eps) * a_prime * a_prime).exp();
                let mut s = vec![Sector::ring(ra, rb)];
                for (r1, r2) in radial_difference(rc, 1.0, ra, rb) {
                    for (th1, th2) in slit_complement(y0, delta) {
                        s.push(Sector { r1, r2, th1, th2, full: false });
                    }
                }
                s
            }
            DomainKind::Dx { x, y0, delta, a_prime, eps, t } => {
                let r2 = (-0.5 * (1.0 - eps) * x * x).exp();
                let r1 = r2 * (-t).exp();
                if x.abs() >= a_prime {
                    vec![Sector::ring(r1, r2)]
                } else {
                    slit_complement(y0, delta)
                        .into_iter()
                        .map(|(th1, th2)| Sector { r1, r2, th1, th2, full: false })
                        .collect()
                }
            }
        }
    }

    /// Membership in the domain as defined (open, except `K` which is compact).
    pub fn contains(&self, z: C64) -> bool {
        let r = z.norm();
        match *self {
            DomainKind::Disk { radius } => r < radius,
            DomainKind::U { y0, delta, a_prime, eps } => {
                (r < 1.0 && slit_distance(z, y0) > 0.5 * delta) || r < u_inner_radius(a_prime, eps)
            }
            DomainKind::K { y0, delta, a_prime, eps, t } => {
                let ring = (-t - 0.5 * (1.0 - eps)).exp() <= r && r <= (-0.5 * (1.0 - eps) * a_prime * a_prime).exp();
                let partial = (-t - 0.5 * (1.0 - eps) * a_prime * a_prime).exp() <= r
                    && r <= 1.0
                    && slit_distance(z, y0) >= delta;
                ring || partial
            }
            DomainKind::Dx { x, y0, delta, a_prime, eps, t } => {
                let r2 = (-0.5 * (1.0 - eps) * x * x).exp();
                r2 * (-t).exp() < r && r < r2 && (x.abs() >= a_prime || slit_distance(z, y0) > delta)
            }
        }
    }

    /// Membership in the closure, up to `tol` in radius and angle.
    pub fn contains_closure(&self, z: C64, tol: f64) -> bool {
        let (r, th) = (z.norm(), z.arg());
        self.sectors().iter().any(|s| {
            if r < s.r1 - tol || r > s.r2 + tol {
                return false;
            }
            if s.full || r <= tol {
                return true;
            }
            let th = if th < s.th1 - tol { th + TAU } else { th };
            th >= s.th1 - tol && th <= s.th2 + tol
        })
    }
}

pub fn u_inner_radius(a_prime: f64, eps: f64) -> f64 {
    (-0.5 * (1.0 - 2.0 * eps) * a_prime * a_prime).exp()
}

/// A point is interior when small steps in eight directions stay in the
/// open set (or in the closed set for compact kinds).
fn is_interior_point(kind: &DomainKind, z: C64) -> bool {
    let eta = 1e-9;
    (0..8).all(|k| kind.contains(z + C64::from_polar(eta, k as f64 * PI / 4.0)))
}

impl PlanarDomain {
    pub fn new(kind: DomainKind) -> Result<Self> {
        Self::with_counts(kind, BOUNDARY_SAMPLES, INTERIOR_SAMPLES, 0.5)
    }

    /// Sample with about `n_boundary` points spread by arc length over the
    /// true boundary, offset by `phase ∈ [0, 1)` of a spacing, and
    /// `n_interior` polar-cell midpoints.
    pub fn with_counts(kind: DomainKind, n_boundary: usize, n_interior: usize, phase: f64) -> Result<Self> {
        kind.validate()?;
        if n_boundary == 0 || !(0.0..1.0).contains(&phase) {
            return Err(invalid("boundary sampling needs a positive count and a phase in [0, 1)"));
        }
        let sectors = kind.sectors();
        let edges: Vec<Edge> = sectors.iter().flat_map(|s| s.edges()).collect();
        // A fine pass measures how much of each edge is true boundary.
        let probe = |e: &Edge, count: usize| -> Vec<bool> {
            (0..count)
                .map(|i| !is_interior_point(&kind, e.point((i as f64 + 0.5) / count as f64)))
                .collect()
        };
        let fine = 512;
        let true_len: f64 = edges
            .iter()
            .map(|e| e.length() * probe(e, fine).iter().filter(|&&b| b).count() as f64 / fine as f64)
            .sum();
        let spacing = true_len / n_boundary as f64;
        let mut boundary = Vec::with_capacity(n_boundary + 16);
        for e in &edges {
            let count = (e.length() / spacing).round().max(1.0) as usize;
            for i in 0..count {
                let z = e.point((i as f64 + phase) / count as f64);
                if !is_interior_point(&kind, z) && kind.contains_closure(z, 1e-12) {
                    boundary.push(z);
                }
            }
        }
        let total: f64 = sectors.iter().map(Sector::area).sum();
        let (mut interior, mut weights) = (Vec::new(), Vec::new());
        for s in &sectors {
            let n_s = ((n_interior as f64) * s.area() / total).round().max(1.0);
            let r_mid = 0.5 * (s.r1 + s.r2);
            let aspect = (s.r2 - s.r1) / (r_mid * (s.th2 - s.th1));
            let n_r = (n_s * aspect).sqrt().round().max(1.0) as usize;
            let n_t = (n_s / n_r as f64).round().max(1.0) as usize;
            let (dr, dt) = ((s.r2 - s.r1) / n_r as f64, (s.th2 - s.th1) / n_t as f64);
            for i in 0..n_r {
                let (a, b) = (s.r1 + i as f64 * dr, s.r1 + (i + 1) as f64 * dr);
                for j in 0..n_t {
                    let th = s.th1 + (j as f64 + 0.5) * dt;
                    interior.push(C64::from_polar(0.5 * (a + b), th));
                    weights.push(0.5 * (b * b - a * a) * dt);
                }
            }
        }
        Ok(PlanarDomain { kind, boundary, interior, weights })
    }

    pub fn disk(radius: f64) -> Result<Self> {
        Self::new(DomainKind::Disk { radius })
    }

    pub fn samples(&self) -> impl Iterator<Item = &C64> {
        self.boundary.iter().chain(&self.interior)
    }

    pub fn sample_count(&self) -> usize {
        self.boundary.len() + self.interior.len()
    }

    fn sample(&self, i: usize) -> C64 {
        if i < self.boundary.len() {
            self.boundary[i]
        } else {
            self.interior[i - self.boundary.len()]
        }
    }

    pub fn area(&self) -> f64 {
        self.kind.sectors().iter().map(Sector::area).sum()
    }

    pub fn max_modulus(&self) -> f64 {
        self.samples().fold(0.0, |a, z| a.max(z.norm()))
    }

    /// Every boundary sample sees 0 along a 100-point segment inside the
    /// closure.
    pub fn is_star_shaped(&self) -> bool {
        self.boundary
            .iter()
            .all(|&z| (0..=100).all(|k| self.kind.contains_closure(z * (k as f64 / 100.0), 1e-12)))
    }

    /// `re,im,weight`: interior samples carry area weights, boundary samples 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,weight\n");
        for z in &self.boundary {
            out.push_str(&format!("{:.16e},{:.16e},0\n", z.re, z.im));
        }
        for (z, w) in self.interior.iter().zip(&self.weights) {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", z.re, z.im, w));
        }
        out
    }
}

/// The parameters of the negative-result geometry: the control set misses the
/// rectangle `{|x| <= a', |y - y0| <= δ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NegativeGeometry {
    pub y0: f64,
    pub delta: f64,
    pub a_prime: f64,
    pub eps: f64,
    pub t: f64,
}

impl Default for NegativeGeometry {
    fn default() -> Self {
        NegativeGeometry { y0: PI / 2.0, delta: 0.2, a_prime: 0.6, eps: 0.05, t: 0.1 }
    }
}

impl NegativeGeometry {
    /// `(1 - 2ε) a'² / 2`; the divergence is expected below it.
    pub fn critical_time(&self) -> f64 {
        0.5 * (1.0 - 2.0 * self.eps) * self.a_prime * self.a_prime
    }

    pub fn disk_radius(&self) -> f64 {
        (-self.t).exp()
    }

    /// Pole on the slit axis at the geometric mean of `e^{-T}` and the inner
    /// radius of `U`, inside the disk when `T` is below the critical time.
    pub fn z0(&self) -> C64 {
        C64::from_polar((-0.5 * (self.t + self.critical_time())).exp(), self.y0)
    }

    pub fn u_kind(&self) -> DomainKind {
        DomainKind::U { y0: self.y0, delta: self.delta, a_prime: self.a_prime, eps: self.eps }
    }

    pub fn k_kind(&self) -> DomainKind {
        DomainKind::K { y0: self.y0, delta: self.delta, a_prime: self.a_prime, eps: self.eps, t: self.t }
    }

    pub fn dx_kind(&self, x: f64) -> DomainKind {
        DomainKind::Dx { x, y0: self.y0, delta: self.delta, a_prime: self.a_prime, eps: self.eps, t: self.t }
    }
}

/// Sampled `U`, failing unless it is star-shaped with respect to 0.
pub fn build_u(y0: f64, delta: f64, a_prime: f64, eps: f64) -> Result<PlanarDomain> {
    let u = PlanarDomain::new(DomainKind::U { y0, delta, a_prime, eps })?;
    if !u.is_star_shaped() {
        return Err(Error::Geometry("U is not star-shaped with respect to 0".into()));
    }
    Ok(u)
}

pub fn build_k(g: &NegativeGeometry) -> Result<PlanarDomain> {
    PlanarDomain::new(g.k_kind())
}

pub fn build_dx(g: &NegativeGeometry, x: f64) -> Result<PlanarDomain> {
    PlanarDomain::new(g.dx_kind(x))
}

/// True when `z` is outside the closure of the domain and away from every sample.
pub fn non_adherent(domain: &PlanarDomain, z: C64) -> bool {
    !domain.kind.contains_closure(z, 1e-12) && domain.samples().all(|&s| (s - z).norm() > 0.0)
}

/// Distance from the samples of `k` to the slit wedges and the outer part of
/// the complement of `U`, ignoring the unit circle they share.
pub fn k_margin_in_u(k: &PlanarDomain, u: &PlanarDomain) -> Result<f64> {
    let DomainKind::U { y0, delta, a_prime, eps } = u.kind else {
        return Err(invalid("margin needs a U domain"));
    };
    let r_in = u_inner_radius(a_prime, eps);
    let half = 0.5 * delta;
    let segment = |p: C64, a: C64, b: C64| -> f64 {
        let d = b - a;
        let s = (((p - a) * d.conj()).re / d.norm_sqr()).clamp(0.0, 1.0);
        (p - (a + d * s)).norm()
    };
    // Upper wedge {r_in <= r <= 1, |φ - y0| <= δ/2}; the lower one is its mirror.
    let dist = |z: C64| -> f64 {
        let p = C64::new(z.re, z.im.abs());
        let (r, phi) = (p.norm(), p.arg());
        if (phi - y0).abs() <= half && (r_in..=1.0).contains(&r) {
            return 0.0;
        }
        let (lo, hi) = (y0 - half, y0 + half);
        let rays = [lo, hi].map(|e| segment(p, C64::from_polar(r_in, e), C64::from_polar(1.0, e)));
        let arc = if (lo..=hi).contains(&phi) { (r - r_in).abs() } else { f64::INFINITY };
        rays[0].min(rays[1]).min(arc)
    };
    Ok(k.samples().fold(f64::INFINITY, |m, &z| m.min(dist(z))))
}

/// `‖Σ a_n z^{n-1}‖²` over `D(0, e^{-T})` in closed form, with `coeffs[j] = a_{j+1}`.
pub fn poly_norm_l2_disk(coeffs: &[C64], t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let n = (j + 1) as f64;
            PI / n * a.norm_sqr() * (-2.0 * n * t).exp()
        })
        .sum::<f64>()
        .sqrt()
}

pub fn horner(coeffs: &[C64], z: C64) -> C64 {
    coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Max of `|p|` over the boundary and interior samples.
pub fn poly_norm_linf(coeffs: &[C64], domain: &PlanarDomain, exec: Execution) -> f64 {
    par::max_range(exec, domain.sample_count(), |i| horner(coeffs, domain.sample(i)).norm())
}

/// Leja sequence from `candidates`: start at the largest modulus, then
/// maximize the product of distances to the points already taken.
pub fn leja_points(candidates: &[C64], m: usize) -> Result<Vec<C64>> {
    if m > candidates.len() {
        return Err(invalid(format!("{m} Leja points requested from {} candidates", candidates.len())));
    }
    let mut out = Vec::with_capacity(m);
    if m == 0 {
        return Ok(out);
    }
    let first = (0..candidates.len()).fold(0, |b, i| if candidates[i].norm() > candidates[b].norm() { i } else { b });
    let mut logp = vec![0.0; candidates.len()];
    let mut used = vec![false; candidates.len()];
    let mut pick = first;
    for _ in 0..m {
        used[pick] = true;
        let zeta = candidates[pick];
        out.push(zeta);
        for (l, c) in logp.iter_mut().zip(candidates) {
            *l += ((c - zeta).norm()).max(1e-300).ln();
        }
        pick = (0..candidates.len())
            .filter(|&i| !used[i])
            .fold(usize::MAX, |b, i| if b == usize::MAX || logp[i] > logp[b] { i } else { b });
        if pick == usize::MAX {
            break;
        }
    }
    Ok(out)
}

/// Family size `m_k = round(32 · 2^{k/2})`.
pub fn family_size(k: usize) -> usize {
    (32.0 * 2f64.powf(0.5 * k as f64)).round() as usize
}

#[derive(Clone, Debug)]
pub struct RungeMember {
    pub k: usize,
    /// Number of interpolation nodes; `p̃ₖ` has degree `m - 1`.
    pub m: usize,
    /// Monomial coefficients of `pₖ = z^{N+1} p̃ₖ`, constant term first.
    pub coeffs: Vec<C64>,
}

impl RungeMember {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// `pₖ(z) = z^{N+1} (1 - qₖ(z)) / (z - z₀)` with
/// `qₖ(z) = Π_{i<mₖ} (z - ζᵢ)/(z₀ - ζᵢ)`. Since `qₖ(z₀) = 1` each `p̃ₖ` is a
/// polynomial; `qₖ → 0` on the node set's filled region, so `p̃ₖ → 1/(z - z₀)`
/// there. Nodes at 0 give the Taylor polynomials of `1/(z - z₀)`.
#[derive(Clone, Debug)]
pub struct RungeFamily {
    pub z0: C64,
    /// `N + 1`.
    pub shift: usize,
    pub nodes: Vec<C64>,
    pub members: Vec<RungeMember>,
}

/// Coefficients of `z^shift (1 - q(z)) / (z - z0)` for the given nodes.
fn family_coefficients(nodes: &[C64], z0: C64, shift: usize) -> Vec<C64> {
    let m = nodes.len();
    let mut q = vec![C64::new(1.0, 0.0)];
    for &zeta in nodes {
        let f = 1.0 / (z0 - zeta);
        let mut next = vec![C64::new(0.0, 0.0); q.len() + 1];
        for (j, &c) in q.iter().enumerate() {
            next[j + 1] += c * f;
            next[j] -= c * zeta * f;
        }
        q = next;
    }
    let mut a: Vec<C64> = q.iter().map(|c| -c).collect();
    a[0] += 1.0;
    // Synthetic division by (z - z0); the remainder 1 - q(z0) vanishes.
    let mut b = vec![C64::new(0.0, 0.0); m];
    let mut r = a[m];
    for k in (0..m).rev() {
        b[k] = r;
        r = a[k] + z0 * r;
    }
    let mut coeffs = vec![C64::new(0.0, 0.0); shift];
    coeffs.extend(b);
    coeffs
}

impl RungeFamily {
    /// Family over the sizes `m₀ < m₁ < …`, sharing one node sequence.
    pub fn from_nodes(z0: C64, shift: usize, nodes: Vec<C64>, sizes: &[usize]) -> Result<Self> {
        if z0.norm() == 0.0 {
            return Err(invalid("the pole z0 must be nonzero"));
        }
        if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes.first().is_some_and(|&m| m == 0) {
            return Err(invalid("family sizes must be positive and increasing"));
        }
        let m_max = sizes.last().copied().unwrap_or(0);
        if m_max > nodes.len() {
            return Err(invalid(format!("family needs {m_max} nodes, got {}", nodes.len())));
        }
        if nodes.iter().any(|&zeta| (zeta - z0).norm() == 0.0) {
            return Err(invalid("a node coincides with the pole"));
        }
        let members = sizes
            .iter()
            .enumerate()
            .map(|(k, &m)| RungeMember { k, m, coeffs: family_coefficients(&nodes[..m], z0, shift) })
            .collect();
        Ok(RungeFamily { z0, shift, nodes: nodes[..m_max].to_vec(), members })
    }

    /// `pₖ(z)` from the product form, which stays accurate where the monomial
    /// coefficients are huge.
    pub fn eval(&self, k: usize, z: C64) -> C64 {
        let mem = &self.members[k];
        if (z - self.z0).norm() < 1e-8 {
            return horner(&mem.coeffs, z);
        }
        let q = self.nodes[..mem.m].iter().fold(C64::new(1.0, 0.0), |acc, &zeta| acc * (z - zeta) / (self.z0 - zeta));
        z.powu(self.shift as u32) * (1.0 - q) / (z - self.z0)
    }

    /// `z^{N+1} / (z - z₀)`, the uniform limit away from the ray.
    pub fn target(&self, z: C64) -> C64 {
        z.powu(self.shift as u32) / (z - self.z0)
    }

    /// `max |pₖ|` over the domain samples for every member, one pass over
    /// the nested node products.
    pub fn sup_all(&self, domain: &PlanarDomain, exec: Execution) -> Vec<f64> {
        let per = par::map_range(exec, domain.sample_count(), |i| {
            let z = domain.sample(i);
            let near = (z - self.z0).norm() < 1e-8;
            let lead = z.powu(self.shift as u32);
            let mut q = C64::new(1.0, 0.0);
            let mut done = 0;
            self.members
                .iter()
                .map(|mem| {
                    if near {
                        return horner(&mem.coeffs, z).norm();
                    }
                    for &zeta in &self.nodes[done..mem.m] {
                        q *= (z - zeta) / (self.z0 - zeta);
                    }
                    done = mem.m;
                    (lead * (1.0 - q) / (z - self.z0)).norm()
                })
                .collect::<Vec<f64>>()
        });
        (0..self.members.len())
            .map(|k| per.iter().fold(0.0f64, |a, row| if row[k].is_nan() { f64::NAN } else { a.max(row[k]) }))
            .collect()
    }

    pub fn target_sup(&self, domain: &PlanarDomain) -> f64 {
        domain.samples().fold(0.0, |a, &z| a.max(self.target(z).norm()))
    }
}

/// Leja-node family for the pole `z0`, members `k = 0..=kmax`, shift `N + 1`.
/// Nodes come from a boundary sampling of `domain` offset from its own
/// samples, so the sup is never read off at an interpolation node.
pub fn runge_family(z0: C64, kmax: usize, n_shift: usize, domain: &PlanarDomain) -> Result<RungeFamily> {
    if z0.norm() == 0.0 {
        return Err(invalid("the pole z0 must be nonzero"));
    }
    let sizes: Vec<usize> = (0..=kmax).map(family_size).collect();
    let m_max = *sizes.last().unwrap();
    let candidates = PlanarDomain::with_counts(domain.kind, (8 * m_max).max(BOUNDARY_SAMPLES), 1, 0.0)?.boundary;
    let nodes = leja_points(&candidates, m_max)?;
    RungeFamily::from_nodes(z0, n_shift + 1, nodes, &sizes)
}

/// Taylor polynomials of `1/(z - z0)` at 0 of the family sizes, times `z^{N+1}`.
pub fn taylor_family(z0: C64, kmax: usize, n_shift: usize) -> Result<RungeFamily> {
    let sizes: Vec<usize> = (0..=kmax).map(family_size).collect();
    let nodes = vec![C64::new(0.0, 0.0); *sizes.last().unwrap()];
    RungeFamily::from_nodes(z0, n_shift + 1, nodes, &sizes)
}

/// Largest series ratio `|c_{j+1} - c_j| / |z - c_{j+1}|` over the domain
/// samples for the pole-pushing chain `c_j = z₀(1 + jρ)` run until `|c| > 2`.
/// A ratio of 0.9 or more is rejected with a smaller suggested step.
pub fn pole_pushing_ratio(z0: C64, rho: f64, domain: &PlanarDomain) -> Result<f64> {
    if !(rho > 0.0) || z0.norm() == 0.0 {
        return Err(invalid("pole pushing needs rho > 0 and z0 != 0"));
    }
    let ratio_for = |rho: f64| {
        let mut worst = 0.0f64;
        let mut j = 0.0;
        loop {
            let (c, next) = (z0 * (1.0 + j * rho), z0 * (1.0 + (j + 1.0) * rho));
            let step = (next - c).norm();
            worst = domain.samples().fold(worst, |w, &z| w.max(step / (z - next).norm()));
            if next.norm() > 2.0 {
                return worst;
            }
            j += 1.0;
        }
    };
    let ratio = ratio_for(rho);
    if ratio >= 0.9 {
        let mut suggest = rho;
        while ratio_for(suggest) >= 0.9 && suggest > 1e-6 {
            suggest *= 0.5;
        }
        return Err(invalid(format!(
            "pole-pushing step rho = {rho} gives series ratio {ratio:.3} >= 0.9; try rho <= {suggest:.4}"
        )));
    }
    Ok(ratio)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RungeRow {
    pub k: usize,
    pub degree: usize,
    pub l2_disk: f64,
    pub linf_u: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct RatioReport {
    pub rows: Vec<RungeRow>,
    pub target_sup: f64,
    /// First `k` with `rₖ >= 10 r₀`.
    pub exceeded_at: Option<usize>,
    /// Smallest `k₀` after which `rₖ` never decreases.
    pub monotone_from: Option<usize>,
}

impl RatioReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,degree,l2_disk,linf_U,ratio\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.16e},{:.16e},{:.16e}\n", r.k, r.degree, r.l2_disk, r.linf_u, r.ratio));
        }
        out
    }

    /// Worst `sup_U |pₖ| / sup_U |z^{N+1}/(z - z₀)|` over the family.
    pub fn sup_excess(&self) -> f64 {
        self.rows.iter().fold(0.0, |a, r| a.max(r.linf_u / self.target_sup))
    }
}

/// `rₖ = ‖pₖ‖_{L²(D(0,e^{-T}))} / ‖pₖ‖_{L∞(U)}` for every member.
pub fn ratio_divergence_test(family: &RungeFamily, t: f64, u: &PlanarDomain, exec: Execution) -> RatioReport {
    let sups = family.sup_all(u, exec);
    let rows: Vec<RungeRow> = family
        .members
        .iter()
        .zip(sups)
        .map(|(mem, sup)| {
            let l2 = poly_norm_l2_disk(&mem.coeffs, t);
            RungeRow { k: mem.k, degree: mem.degree(), l2_disk: l2, linf_u: sup, ratio: l2 / sup }
        })
        .collect();
    let r0 = rows.first().map_or(f64::NAN, |r| r.ratio);
    let exceeded_at = rows.iter().find(|r| r.ratio >= 10.0 * r0).map(|r| r.k);
    let monotone_from = (0..rows.len()).find(|&k0| rows[k0..].windows(2).all(|w| w[1].ratio >= w[0].ratio));
    RatioReport { rows, target_sup: family.target_sup(u), exceeded_at, monotone_from }
}

#[derive(Clone, Debug)]
pub struct MultiplierReport {
    pub constant: f64,
    pub running_max: Vec<f64>,
    /// The running max grew by at most 5% over the second half of the trials.
    pub stabilized: bool,
}

/// Empirical constant in
/// `‖Σ aₙ wₙ(x) e^{-ρₙτ} z^{n-1}‖_{L∞(K)} <= C ‖Σ aₙ z^{n-1}‖_{L∞(V)}`
/// over random `aₙ` (`N < n <= N + 60`), grid abscissas `x` and `τ ∈ [0, T]`.
#[allow(clippy::too_many_arguments)]
pub fn multiplier_inequality_check(
    table: &SpectralTable,
    k_dom: &PlanarDomain,
    v_dom: &PlanarDomain,
    n_low: usize,
    t: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<MultiplierReport> {
    const SPAN: usize = 60;
    if table.n_max() < n_low + SPAN {
        return Err(invalid(format!("spectral table needs modes up to {}, has {}", n_low + SPAN, table.n_max())));
    }
    if !v_dom.is_star_shaped() {
        return Err(Error::Geometry("V is not star-shaped with respect to 0".into()));
    }
    if trials < 2 {
        return Err(invalid("need at least two trials"));
    }
    let w: Vec<Vec<f64>> =
        (n_low + 1..=n_low + SPAN).map(|n| w_profile(table.pair(n), table.eps, &table.grid)).collect::<Result<_>>()?;
    let rho: Vec<f64> = (n_low + 1..=n_low + SPAN).map(|n| table.rho[n - 1]).collect();
    let nx = table.grid.count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut running = Vec::with_capacity(trials);
    let mut best = 0.0f64;
    let sup = |coeffs: &[C64], dom: &PlanarDomain| -> f64 {
        // Σ_{n} a_n z^{n-1} = z^{N} Σ_j a_{N+1+j} z^j.
        par::max_range(exec, dom.sample_count(), |i| {
            let z = dom.sample(i);
            (z.powu(n_low as u32) * horner(coeffs, z)).norm()
        })
    };
    for _ in 0..trials {
        let a: Vec<C64> = (0..SPAN).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let i = rng.random_range(1..nx - 1);
        let tau = rng.random_range(0.0..=t);
        let b: Vec<C64> = a.iter().enumerate().map(|(j, &c)| c * w[j][i] * (-rho[j] * tau).exp()).collect();
        let ratio = sup(&b, k_dom) / sup(&a, v_dom);
        best = best.max(ratio);
        running.push(best);
    }
    let half = running[trials / 2 - 1];
    Ok(MultiplierReport { constant: best, stabilized: best <= 1.05 * half, running_max: running })
}
