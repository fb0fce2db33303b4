mod common;

use std::f64::consts::PI;

use common::{disk_inner, disk_quadrature, rel};
use grushin::complexplane::*;
use grushin::spectral::{Grid1D, SpectralTable};
use grushin::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn geometry(t: f64) -> NegativeGeometry {
    NegativeGeometry { t, ..NegativeGeometry::default() }
}

fn default_u() -> PlanarDomain {
    let g = NegativeGeometry::default();
    build_u(g.y0, g.delta, g.a_prime, g.eps).unwrap()
}

fn random_poly(rng: &mut ChaCha8Rng, terms: usize) -> Vec<C64> {
    (0..terms).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

#[test]
fn u_examples() {
    assert!((u_inner_radius(0.6, 0.05) - 0.8504).abs() < 1e-4);
    let u = default_u();
    assert!(u.kind.contains(C64::new(0.0, 0.0)));
    assert!(u.is_star_shaped());
    // The point from the divergence argument, on the slit axis.
    for t in [0.05f64, 0.1, 0.3] {
        let z0 = C64::from_polar((-t / 2.0f64).exp(), PI / 2.0);
        assert!(non_adherent(&u, z0), "T = {t}");
    }
    assert!(!non_adherent(&u, C64::new(0.1, 0.1)));
}

#[test]
fn domain_samples_satisfy_their_predicates() {
    let g = NegativeGeometry::default();
    let kinds = [g.u_kind(), g.k_kind(), g.dx_kind(0.2), g.dx_kind(0.8), DomainKind::Disk { radius: 0.7 }];
    for kind in kinds {
        let d = PlanarDomain::new(kind).unwrap();
        assert!(d.interior.iter().all(|&z| kind.contains(z)), "{kind:?}");
        assert!(d.boundary.iter().all(|&z| kind.contains_closure(z, 1e-9)), "{kind:?}");
        let total: f64 = d.weights.iter().sum();
        assert!(rel(total, d.area()) < 1e-12, "{kind:?}");
    }
}

#[test]
fn k_sits_inside_u_with_a_margin() {
    let g = NegativeGeometry::default();
    let (k, u) = (build_k(&g).unwrap(), default_u());
    let margin = k_margin_in_u(&k, &u).unwrap();
    assert!(margin > 0.0);
    assert!(k.max_modulus() <= u.max_modulus() + 1e-12);
    // Every D_x lies in K.
    for x in [-0.9, -0.5, 0.0, 0.3, 0.7] {
        let d = build_dx(&g, x).unwrap();
        assert!(d.interior.iter().all(|&z| g.k_kind().contains(z)), "x = {x}");
    }
}

#[test]
fn invalid_geometry_is_rejected() {
    assert!(matches!(build_u(0.05, 0.2, 0.6, 0.05), Err(grushin::Error::Geometry(_))));
    assert!(build_u(1.0, 0.2, 1.2, 0.05).is_err());
    assert!(PlanarDomain::disk(-1.0).is_err());
}

#[test]
fn disk_norm_examples() {
    let one = [C64::new(1.0, 0.0)];
    assert!((poly_norm_l2_disk(&one, 0.0).powi(2) - PI).abs() < 1e-15);
    for n in [1usize, 4, 9] {
        for t in [0.0f64, 0.1, 0.7] {
            let mut c = vec![C64::new(0.0, 0.0); n];
            c[n - 1] = C64::new(1.0, 0.0);
            let want = (PI / n as f64).sqrt() * (-(n as f64) * t).exp();
            assert!(rel(poly_norm_l2_disk(&c, t), want) < 1e-14);
        }
    }
}

#[test]
fn disk_norm_matches_polar_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..20 {
        let terms = if case < 10 { 20 } else { 50 };
        let c = random_poly(&mut rng, terms);
        let t: f64 = rng.random_range(0.0..0.5);
        let quad = disk_quadrature(|z| horner(&c, z), (-t).exp(), 64, 128).sqrt();
        assert!(rel(poly_norm_l2_disk(&c, t), quad) < 1e-6, "case {case}");
    }
}

#[test]
fn monomials_are_orthogonal_on_disks() {
    for (n, m) in [(0u32, 1u32), (2, 5), (7, 3), (10, 11)] {
        let cross = disk_inner(|z| z.powu(n), |z| z.powu(m), 0.8, 32, 64).norm();
        let scale = disk_quadrature(|z| z.powu(n), 0.8, 32, 64).max(disk_quadrature(|z| z.powu(m), 0.8, 32, 64));
        assert!(cross <= 1e-10 * scale, "({n}, {m})");
    }
}

#[test]
fn family_norm_matches_quadrature_of_the_product_form() {
    let g = NegativeGeometry::default();
    let u = default_u();
    let fam = runge_family(g.z0(), 8, 4, &u).unwrap();
    let r = g.disk_radius();
    for k in [2, 5, 8] {
        let deg = fam.members[k].degree();
        let quad = disk_quadrature(|z| fam.eval(k, z), r, deg / 2 + 16, 2 * deg + 32).sqrt();
        let closed = poly_norm_l2_disk(&fam.members[k].coeffs, g.t);
        assert!(rel(closed, quad) < 1e-6, "k = {k}: {closed} vs {quad}");
    }
}

#[test]
fn sup_norm_examples() {
    let u = default_u();
    assert_eq!(poly_norm_linf(&[C64::new(1.0, 0.0)], &u, Execution::default()), 1.0);
    for n in [1usize, 5, 40] {
        let mut c = vec![C64::new(0.0, 0.0); n + 1];
        c[n] = C64::new(1.0, 0.0);
        let sup = poly_norm_linf(&c, &u, Execution::default());
        assert!(rel(sup, u.max_modulus().powi(n as i32)) < 1e-12);
        assert!(sup <= 1.0 + 1e-12 && sup > 0.99);
    }
}

#[test]
fn sup_norm_is_stable_under_refinement() {
    let g = NegativeGeometry::default();
    let u = default_u();
    let fine = PlanarDomain::with_counts(u.kind, 2 * BOUNDARY_SAMPLES, 2 * INTERIOR_SAMPLES, 0.5).unwrap();
    let fam = runge_family(g.z0(), 5, 4, &u).unwrap();
    assert!(fam.members.last().unwrap().degree() <= 200);
    let (a, b) = (fam.sup_all(&u, Execution::default()), fam.sup_all(&fine, Execution::default()));
    for k in 0..a.len() {
        assert!(rel(a[k], b[k]) < 0.01, "k = {k}: {} vs {}", a[k], b[k]);
    }
}

#[test]
fn family_shape() {
    let g = NegativeGeometry::default();
    let fam = runge_family(g.z0(), 12, 4, &default_u()).unwrap();
    assert_eq!(fam.members.len(), 13);
    for mem in &fam.members {
        assert!(mem.coeffs[..5].iter().all(|c| c.norm() == 0.0));
        assert_eq!(mem.degree(), 5 + mem.m - 1);
        assert!(mem.degree() <= 4096);
    }
    assert_eq!(fam.members[0].m, 32);
    assert_eq!(fam.members[12].m, 2048);
}

#[test]
fn family_converges_geometrically_away_from_the_ray() {
    let g = NegativeGeometry::default();
    let fam = runge_family(g.z0(), 12, 4, &default_u()).unwrap();
    let r = 0.9 * g.z0().norm();
    let errors: Vec<f64> = (0..fam.members.len())
        .map(|k| {
            (0..256)
                .map(|j| {
                    let z = C64::from_polar(r, 2.0 * PI * j as f64 / 256.0);
                    let approx = fam.eval(k, z) / z.powu(fam.shift as u32);
                    (approx - 1.0 / (z - fam.z0)).norm()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    // Small members still feel the slit; past a burn-in the decay is monotone.
    for k in 6..errors.len() {
        assert!(errors[k] < errors[k - 1], "k = {k}: {errors:?}");
    }
    assert!(errors[12] < 1e-3 * errors[0], "{errors:?}");
}

#[test]
fn taylor_member_reproduces_the_series() {
    let z0 = C64::new(0.2, 0.9);
    let fam = taylor_family(z0, 2, 3).unwrap();
    let mem = &fam.members[0];
    for (j, c) in mem.coeffs.iter().enumerate() {
        let want = if j < 4 { C64::new(0.0, 0.0) } else { -z0.powi(-(j as i32 - 3)) };
        assert!((c - want).norm() <= 1e-12 * want.norm().max(1.0), "j = {j}");
    }
}

#[test]
fn sup_on_u_stays_within_twice_the_target() {
    let g = NegativeGeometry::default();
    let u = default_u();
    let fam = runge_family(g.z0(), 12, 4, &u).unwrap();
    let rep = ratio_divergence_test(&fam, g.t, &u, Execution::default());
    assert!(rep.sup_excess() <= 2.0, "{}", rep.sup_excess());
}

#[test]
fn ratio_diverges_below_the_critical_time() {
    let g = NegativeGeometry::default();
    assert!(g.t < g.critical_time());
    let u = default_u();
    let fam = runge_family(g.z0(), 12, 4, &u).unwrap();
    let rep = ratio_divergence_test(&fam, g.t, &u, Execution::default());
    assert!(rep.exceeded_at.is_some_and(|k| k <= 12));
    let from = rep.monotone_from.expect("monotone tail");
    assert!(from <= 8);
    let csv = rep.to_csv();
    assert!(csv.starts_with("k,degree,l2_disk,linf_U,ratio\n"));
    assert_eq!(csv.lines().count(), 14);
}

#[test]
fn ratio_stays_bounded_when_the_pole_is_in_u() {
    let g = geometry(0.3);
    let u = default_u();
    let z0 = g.z0();
    assert!(u.kind.contains(C64::from_polar(g.disk_radius(), g.y0)));
    let fam = runge_family(z0, 12, 4, &u).unwrap();
    let rep = ratio_divergence_test(&fam, g.t, &u, Execution::default());
    assert!(rep.rows.iter().all(|r| r.ratio < 0.1), "{}", rep.to_csv());
}

#[test]
fn aggressive_pole_pushing_is_rejected() {
    let g = NegativeGeometry::default();
    let u = default_u();
    let err = pole_pushing_ratio(g.z0(), 0.5, &u).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("try rho"));
    let ok = pole_pushing_ratio(g.z0(), 0.01, &u).unwrap();
    assert!(ok < 0.9);
}

#[test]
fn leja_points_spread_out() {
    let ring: Vec<C64> = (0..64).map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / 64.0)).collect();
    let pts = leja_points(&ring, 4).unwrap();
    // On a circle the first four Leja points are a square.
    for w in pts.windows(2) {
        assert!((w[0] - w[1]).norm() > 1.4);
    }
    assert!(leja_points(&ring, 65).is_err());
}

#[test]
fn multiplier_trivial_bounds() {
    let g = NegativeGeometry::default();
    let (k, u) = (build_k(&g).unwrap(), default_u());
    let table = SpectralTable::build(40, Grid1D::new(399).unwrap(), g.eps, false, Execution::default()).unwrap();
    // x = 0, τ = 0: both sides are sups of one polynomial and K ⊂ U.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let c = random_poly(&mut rng, 30);
        // Both boundaries touch the unit circle at different sample points.
        let (on_k, on_u) = (poly_norm_linf(&c, &k, Execution::default()), poly_norm_linf(&c, &u, Execution::default()));
        assert!(on_k <= on_u * (1.0 + 1e-3), "{on_k} vs {on_u}");
    }
    // A single monomial: the ratio is |wₙ(x)| e^{-ρₙτ} times a radial factor <= 1.
    let (kmax, umax) = (k.max_modulus(), u.max_modulus());
    for n in [5usize, 20, 40] {
        assert!(kmax.powi(n as i32 - 1) <= umax.powi(n as i32 - 1));
        assert!(table.rho[n - 1].abs() * g.t < 1.0);
    }
}

#[test]
fn multiplier_constant_is_reproducible_and_stabilizes() {
    let g = NegativeGeometry::default();
    let (k, u) = (build_k(&g).unwrap(), default_u());
    let table = SpectralTable::build(65, Grid1D::new(399).unwrap(), g.eps, false, Execution::default()).unwrap();
    let a = multiplier_inequality_check(&table, &k, &u, 5, g.t, 300, 9, Execution::default()).unwrap();
    let b = multiplier_inequality_check(&table, &k, &u, 5, g.t, 300, 9, Execution::Sequential).unwrap();
    assert_eq!(a.constant, b.constant);
    assert_eq!(a.running_max.len(), 300);
    assert!(a.running_max.windows(2).all(|w| w[1] >= w[0]));
    assert!(a.constant.is_finite() && a.constant > 0.0);
    assert!(a.stabilized);
    let short = SpectralTable::build(30, Grid1D::new(399).unwrap(), g.eps, false, Execution::default()).unwrap();
    assert!(multiplier_inequality_check(&short, &k, &u, 5, g.t, 300, 9, Execution::default()).is_err());
}

#[test]
fn domain_csv_layout() {
    let d = PlanarDomain::with_counts(DomainKind::Disk { radius: 0.5 }, 16, 8, 0.5).unwrap();
    let csv = d.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("re,im,weight"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), d.sample_count());
    assert!(rows[..d.boundary.len()].iter().all(|r| r[2] == 0.0));
    let total: f64 = rows.iter().map(|r| r[2]).sum();
    assert!(rel(total, PI * 0.25) < 1e-12);
}
