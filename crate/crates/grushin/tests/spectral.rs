mod common;

use std::f64::consts::PI;

use common::{rel, shooting_eigenvalue, shooting_profile};
use grushin::spectral::*;
use grushin::{tridiag, Execution};

fn fine() -> Grid1D {
    Grid1D::with_spacing(1e-3).unwrap()
}

#[test]
fn oracle_itself_reproduces_the_laplacian() {
    assert!((shooting_eigenvalue(0) - PI * PI / 4.0).abs() < 1e-10);
}

#[test]
fn extrapolated_eigenvalues_match_shooting() {
    let g = fine();
    for n in [0usize, 1, 5, 10, 20, 40] {
        let pair = solve_mode_eigenpair(n, &g).unwrap();
        let (lambda, used) = extrapolated_lambda(n, &pair, &g);
        assert!(used);
        let oracle = shooting_eigenvalue(n);
        assert!((lambda - oracle).abs() <= 1e-6, "n = {n}: {lambda} vs {oracle}");
    }
}

#[test]
fn raw_eigenvalues_converge_at_second_order() {
    for n in [1usize, 10, 40] {
        let oracle = shooting_eigenvalue(n);
        let e1 = (solve_mode_eigenpair(n, &Grid1D::new(399).unwrap()).unwrap().lambda - oracle).abs();
        let e2 = (solve_mode_eigenpair(n, &Grid1D::new(799).unwrap()).unwrap().lambda - oracle).abs();
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "n = {n}: order {order}");
    }
}

#[test]
fn laplacian_ground_state() {
    let g = fine();
    let (lambda, _) = extrapolated_lambda(0, &solve_mode_eigenpair(0, &g).unwrap(), &g);
    assert!((lambda - PI * PI / 4.0).abs() < 1e-8);
    let p = solve_mode_eigenpair(0, &g).unwrap();
    assert!((mode_norm_sq(&p, &g) - 1.0).abs() < 1e-5);
}

#[test]
fn mode_five_follows_the_oracle_profile() {
    let g = fine();
    let p = solve_mode_eigenpair(5, &g).unwrap();
    let oracle = shooting_eigenvalue(5);
    assert!((p.lambda - 5.0 - (oracle - 5.0)).abs() < 1e-5);
    for i in (0..g.count()).step_by(50) {
        let x = g.node(i);
        let want = shooting_profile(5, oracle, x);
        assert!((p.v[i] - want).abs() < 1e-5, "x = {x}");
    }
}

#[test]
fn mode_one_residual_matches_oracle() {
    let table = SpectralTable::build(1, fine(), 0.1, true, Execution::Sequential).unwrap();
    let oracle = shooting_eigenvalue(1) - 1.0;
    assert!((table.rho[0] - oracle).abs() < 1e-6);
    assert!((oracle - 1.5969196638).abs() < 1e-8);
}

#[test]
fn mode_ten_correction_is_below_e_minus_five() {
    let table = SpectralTable::build(10, fine(), 0.1, true, Execution::default()).unwrap();
    assert!(table.rho[9].abs() < (-5.0f64).exp());
    let flags = residual_symbol(&table);
    assert_eq!(flags[9].status, RhoStatus::Within);
    assert!(flags[..9].iter().all(|e| e.status == RhoStatus::Unchecked));
}

#[test]
fn eigenpair_invariants() {
    let g = Grid1D::new(999).unwrap();
    let mut prev = 0.0;
    for n in [0usize, 1, 2, 3, 7, 15, 31] {
        let p = solve_mode_eigenpair(n, &g).unwrap();
        assert_eq!(p.v[g.center()], 1.0);
        assert!(p.lambda > prev);
        prev = p.lambda;
        for i in 0..g.count() {
            assert_eq!(p.v[i], p.v[g.mirror(i)]);
            assert!(p.v[i] > 0.0);
        }
        let (diag, off) = modal_operator(n, &g);
        let mut av = vec![0.0; g.count()];
        tridiag::matvec(&diag, &off, &p.v, &mut av);
        let res = av.iter().zip(&p.v).fold(0.0f64, |m, (a, v)| m.max((a - p.lambda * v).abs()));
        assert!(res <= 1e-8, "n = {n}: residual {res}");
    }
}

#[test]
fn norms_follow_the_gaussian_limit() {
    let table = SpectralTable::build(40, fine(), 0.1, false, Execution::default()).unwrap();
    for n in 1..=40 {
        let nf = n as f64;
        assert!(table.normsq[n - 1] >= 0.5 * (PI / nf).sqrt());
    }
    for n in 20..=40 {
        let scaled = table.normsq[n - 1] * (n as f64).sqrt();
        assert!((1.68..=1.87).contains(&scaled), "n = {n}: {scaled}");
    }
    assert!(rel(table.normsq[39] * 40f64.sqrt(), PI.sqrt()) < 0.05);
}

#[test]
fn w_profiles_are_normalized_and_bounded() {
    let g = fine();
    let table = SpectralTable::build(40, g, 0.1, false, Execution::default()).unwrap();
    for n in 1..=40 {
        let w = w_profile(table.pair(n), 0.1, &g).unwrap();
        assert_eq!(w[g.center()], 1.0);
        for i in 0..g.count() {
            assert_eq!(w[i], w[g.mirror(i)]);
            if g.node(i).abs() <= 0.9 {
                assert!(w[i].abs() <= 10.0);
            }
        }
    }
    let p = solve_mode_eigenpair(20, &g).unwrap();
    let w = w_profile(&p, 0.25, &g).unwrap();
    assert!(w[0].abs() < 1e-2 && w[g.count() - 1].abs() < 1e-2);
    assert!(w_profile(&p, 0.5, &g).is_err());
}

#[test]
fn table_csv_layout() {
    let table = SpectralTable::build(4, Grid1D::new(399).unwrap(), 0.1, true, Execution::default()).unwrap();
    let csv = table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,lambda,rho,normsq,wmax");
    assert_eq!(lines.len(), 5);
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[1], table.lambda[0]);
    assert_eq!(first[2], table.rho[0]);
}

#[test]
fn table_is_identical_sequential_and_parallel() {
    let g = Grid1D::new(799).unwrap();
    let a = SpectralTable::build(25, g, 0.1, true, Execution::Sequential).unwrap();
    let b = SpectralTable::build(25, g, 0.1, true, Execution::default()).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn coarse_grids_and_bad_inputs_are_rejected() {
    assert!(matches!(
        solve_mode_eigenpair(40, &Grid1D::new(51).unwrap()),
        Err(grushin::Error::Resolution { .. })
    ));
    assert!(SpectralTable::build(0, fine(), 0.1, false, Execution::default()).is_err());
    assert!(SpectralTable::build(3, fine(), 0.0, false, Execution::default()).is_err());
    assert!(Grid1D::with_spacing(0.3).is_err());
}
