use std::f64::consts::PI;

use grushin::geometry::Grid2D;
use grushin::solver::*;
use grushin::spectral::{solve_mode_eigenpair, Grid1D};
use grushin::Execution;

fn grid() -> Grid1D {
    Grid1D::new(399).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Smooth, not an eigenfunction: `(1 - x²)³ e^{x}` in mode 1 and a narrower
/// bump in mode 4. The cubic factor keeps `f''` zero at the walls, which the
/// second-order rate needs.
fn smooth_state(g: &Grid1D, n_modes: usize) -> ModalState {
    let mut s = ModalState::zeros(n_modes, g);
    for i in 0..g.count() {
        let x = g.node(i);
        s.mode_mut(1)[i] = (1.0 - x * x).powi(3) * x.exp();
        s.mode_mut(4)[i] = 0.5 * (1.0 - x * x).powi(4) * (2.0 * x).cos();
    }
    s
}

#[test]
fn one_step_decays_an_eigenfunction_at_its_eigenvalue() {
    let g = grid();
    let p = solve_mode_eigenpair(3, &g).unwrap();
    let dt = 1e-3;
    let out = step_mode(&p.v, 3, dt, &vec![0.0; g.count()], &g).unwrap();
    let want: Vec<f64> = p.v.iter().map(|v| v * (-p.lambda * dt).exp()).collect();
    // Local Crank–Nicolson error is λ³dt³/12.
    assert!(max_diff(&out, &want) <= 2.0 * p.lambda.powi(3) * dt.powi(3) / 12.0);
}

#[test]
fn single_mode_decay_over_unit_time() {
    let g = Grid1D::with_spacing(1e-3).unwrap();
    let p = solve_mode_eigenpair(1, &g).unwrap();
    let f0 = ModalState::single_mode(1, &g, 1, &p.v).unwrap();
    let traj = evolve(&f0, 1.0, 1e-3, &Unforced, Record::Ends, Execution::default()).unwrap();
    let end = traj.last();
    assert_eq!(traj.steps, 1000);
    assert!((end.t - 1.0).abs() < 1e-12);
    // Exact for the scheme: the Crank–Nicolson amplification factor.
    let x = 0.5 * p.lambda * 1e-3;
    let cn = ((1.0 - x) / (1.0 + x)).powi(1000);
    for i in 0..g.count() {
        assert!((end.coeffs[i] - cn * p.v[i]).abs() <= 1e-10);
    }
    // Against continuous decay the scheme error λ³dt²T/12 ≈ 1.5e-6 dominates.
    let rel = (cn - (-p.lambda).exp()).abs() / (-p.lambda).exp();
    assert!(rel < 2e-6, "{rel}");
}

#[test]
fn unforced_evolution_is_dissipative_every_step() {
    let g = grid();
    let f0 = smooth_state(&g, 6);
    let mut prev = l2_norm_sq(&f0, &g);
    evolve_with(&f0, 0.5, 0.01, &Unforced, Execution::default(), |_, _, after, _| {
        let now = l2_norm_sq(after, &g);
        assert!(now <= prev);
        prev = now;
        Ok(())
    })
    .unwrap();
}

#[test]
fn constant_source_reaches_the_steady_state() {
    let g = grid();
    let p = solve_mode_eigenpair(1, &g).unwrap();
    let mut source = vec![0.0; 2 * g.count()];
    source[..g.count()].copy_from_slice(&p.v);
    let traj = evolve(&ModalState::zeros(2, &g), 12.0, 0.01, &ConstantModal(source), Record::Ends, Execution::default())
        .unwrap();
    let end = traj.last();
    for i in 0..g.count() {
        assert!((end.mode(1)[i] - p.v[i] / p.lambda).abs() < 1e-10);
    }
    assert!(end.mode(2).iter().all(|&v| v == 0.0));
}

#[test]
fn energy_norm_examples() {
    let g = grid();
    let p = solve_mode_eigenpair(1, &g).unwrap();
    let s = ModalState::single_mode(3, &g, 1, &p.v).unwrap();
    let normsq: f64 = g.h() * p.v.iter().map(|v| v * v).sum::<f64>();
    let want = p.lambda * PI / 2.0 * normsq;
    assert!((energy_norm_sq(&s, &g) - want).abs() < 1e-9 * want);
    assert_eq!(energy_norm_sq(&ModalState::zeros(3, &g), &g), 0.0);
    let f = smooth_state(&g, 5);
    let e = energy_norm_sq(&f, &g);
    assert!((energy_norm_sq(&f.scaled(-2.5), &g) - 6.25 * e).abs() < 1e-12 * e);
}

#[test]
fn halving_dt_reduces_the_error_fourfold() {
    let g = grid();
    let f0 = smooth_state(&g, 5);
    let run = |dt: f64| evolve(&f0, 0.1, dt, &Unforced, Record::Ends, Execution::default()).unwrap().last().clone();
    let dt = 0.01;
    let reference = run(dt / 8.0);
    let err = |s: &ModalState| {
        let mut d = s.clone();
        d.coeffs.iter_mut().zip(&reference.coeffs).for_each(|(a, b)| *a -= b);
        l2_norm_sq(&d, &g).sqrt()
    };
    let ratio = err(&run(dt)) / err(&run(dt / 2.0));
    assert!((3.6..=4.4).contains(&ratio), "ratio {ratio}");
}

#[test]
fn modes_do_not_leak_into_each_other() {
    let g = grid();
    let p = solve_mode_eigenpair(3, &g).unwrap();
    let f0 = ModalState::single_mode(6, &g, 3, &p.v).unwrap();
    let traj = evolve(&f0, 0.3, 1e-3, &Unforced, Record::Every(50), Execution::default()).unwrap();
    for s in &traj.states {
        for n in [1, 2, 4, 5, 6] {
            assert!(s.mode(n).iter().all(|&v| v == 0.0));
        }
    }
    assert_eq!(traj.states.len(), 1 + 300 / 50);
}

#[test]
fn grid_source_matches_the_modal_source() {
    let g1 = Grid1D::new(79).unwrap();
    let g2 = Grid2D::new(81, 41).unwrap();
    let p = solve_mode_eigenpair(2, &g1).unwrap();
    let profile = p.v.clone();
    let grid_src = GridForcing::new(g2, 3, move |_, out: &mut [f64]| {
        for j in 0..g2.ny {
            for i in 1..g2.nx - 1 {
                out[g2.idx(i, j)] = profile[i - 1] * (2.0 * g2.y(j)).sin();
            }
        }
    });
    let mut modal = vec![0.0; 3 * g1.count()];
    modal[g1.count()..2 * g1.count()].copy_from_slice(&p.v);
    let f0 = ModalState::zeros(3, &g1);
    let a = evolve(&f0, 0.2, 0.01, &grid_src, Record::Ends, Execution::default()).unwrap();
    let b = evolve(&f0, 0.2, 0.01, &ConstantModal(modal), Record::Ends, Execution::default()).unwrap();
    assert!(max_diff(&a.last().coeffs, &b.last().coeffs) < 1e-12);
}

#[test]
fn sine_transform_round_trip_on_the_default_rows() {
    let ny = 401;
    let table = SineTable::new(ny - 2, ny);
    let column: Vec<f64> = (0..ny)
        .map(|j| {
            let y = PI * j as f64 / (ny - 1) as f64;
            y * (PI - y) * (3.0 * y).cos()
        })
        .collect();
    let mut c = vec![0.0; ny - 2];
    sine_forward(&column, &table, &mut c);
    let mut back = vec![0.0; ny];
    sine_inverse(&c, &table, &mut back);
    let scale = column.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_diff(&back, &column) <= 1e-12 * scale);
}

#[test]
fn synthesis_places_modes_on_the_grid() {
    let g1 = Grid1D::new(39).unwrap();
    let g2 = Grid2D::new(41, 21).unwrap();
    let p = solve_mode_eigenpair(1, &g1).unwrap();
    let s = ModalState::single_mode(2, &g1, 1, &p.v).unwrap();
    let mut field = vec![0.0; g2.len()];
    synthesize(&s, g2, &SineTable::new(2, g2.ny), &mut field);
    for j in 0..g2.ny {
        assert_eq!(field[g2.idx(0, j)], 0.0);
        for i in 1..g2.nx - 1 {
            assert!((field[g2.idx(i, j)] - p.v[i - 1] * g2.y(j).sin()).abs() < 1e-14);
        }
    }
    let mut buf = Vec::new();
    write_snapshot(&mut buf, 2, g2, 0.5, &field).unwrap();
    let back = read_snapshot(&buf).unwrap();
    assert_eq!(back.field, field);
    assert!(read_snapshot(&buf[..buf.len() - 1]).is_err());
}

#[test]
fn norm_series_layout() {
    let g = grid();
    let traj = evolve(&smooth_state(&g, 4), 0.05, 0.01, &Unforced, Record::Every(1), Execution::default()).unwrap();
    let csv = norms_csv(&traj, &g);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,l2,energy");
    assert_eq!(lines.len(), 1 + 6);
}

#[test]
fn invalid_steps_are_rejected() {
    let g = grid();
    assert!(step_mode(&vec![0.0; g.count()], 1, 0.0, &vec![0.0; g.count()], &g).is_err());
    assert!(evolve(&ModalState::zeros(1, &g), -1.0, 0.01, &Unforced, Record::Ends, Execution::default()).is_err());
    assert!(ModalState::single_mode(2, &g, 3, &vec![0.0; g.count()]).is_err());
}

#[test]
fn blow_up_is_reported_as_numerical_failure() {
    let g = grid();
    let mut f0 = ModalState::zeros(1, &g);
    f0.coeffs[10] = f64::MAX;
    f0.coeffs[11] = -f64::MAX;
    let r = evolve(&f0, 0.01, 0.01, &Unforced, Record::Ends, Execution::default());
    assert!(matches!(r, Err(grushin::Error::Numerical(_))));
}
