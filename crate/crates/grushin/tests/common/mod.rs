//! Reference computations that share no code with the library.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;

/// Even solution of `v'' = (n²x² - λ) v` with `v(0) = 1`, integrated to `x = 1`
/// by classical RK4. Returns `v(1)`.
pub fn shoot(n: f64, lambda: f64, steps: usize) -> f64 {
    let h = 1.0 / steps as f64;
    let f = |x: f64, v: f64, w: f64| (w, (n * n * x * x - lambda) * v);
    let (mut v, mut w) = (1.0, 0.0);
    for k in 0..steps {
        let x = k as f64 * h;
        let (a1, b1) = f(x, v, w);
        let (a2, b2) = f(x + h / 2.0, v + h / 2.0 * a1, w + h / 2.0 * b1);
        let (a3, b3) = f(x + h / 2.0, v + h / 2.0 * a2, w + h / 2.0 * b2);
        let (a4, b4) = f(x + h, v + h * a3, w + h * b3);
        v += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        w += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    v
}

/// Ground-state eigenvalue of `-d²/dx² + (n x)²` on (-1, 1), Dirichlet, by
/// bisection on the sign of the shooting endpoint value.
pub fn shooting_eigenvalue(n: usize) -> f64 {
    let nf = n as f64;
    // v(1) > 0 below the ground state; the next even state sits far above n + 3.
    let (mut lo, mut hi) = (0.9 * nf, nf + 3.0);
    assert!(shoot(nf, lo, 20_000) > 0.0 && shoot(nf, hi, 20_000) < 0.0);
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if shoot(nf, mid, 20_000) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Shooting profile at `x` (|x| <= 1) for a given eigenvalue, `v(0) = 1`.
pub fn shooting_profile(n: usize, lambda: f64, x: f64) -> f64 {
    let steps = ((x.abs() * 20_000.0).round() as usize).max(1);
    let nf = n as f64;
    let h = x.abs() / steps as f64;
    let f = |x: f64, v: f64, w: f64| (w, (nf * nf * x * x - lambda) * v);
    let (mut v, mut w) = (1.0, 0.0);
    for k in 0..steps {
        let s = k as f64 * h;
        let (a1, b1) = f(s, v, w);
        let (a2, b2) = f(s + h / 2.0, v + h / 2.0 * a1, w + h / 2.0 * b1);
        let (a3, b3) = f(s + h / 2.0, v + h / 2.0 * a2, w + h / 2.0 * b2);
        let (a4, b4) = f(s + h, v + h * a3, w + h * b3);
        v += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        w += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    v
}

/// Gauss–Legendre nodes and weights on (a, b), Newton iteration on P_m.
pub fn gauss_legendre(m: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w));
    }
    out
}

/// `∫_{|z|<r} |f|²` by Gauss–Legendre in the radius and the trapezoidal rule
/// in the angle (exact for polynomials of degree below `angles / 2`).
pub fn disk_quadrature<F: Fn(Complex64) -> Complex64>(f: F, r: f64, radial: usize, angles: usize) -> f64 {
    let rule = gauss_legendre(radial, 0.0, r);
    let dth = 2.0 * PI / angles as f64;
    let mut total = 0.0;
    for &(s, w) in &rule {
        let ring: f64 = (0..angles).map(|k| f(Complex64::from_polar(s, k as f64 * dth)).norm_sqr()).sum();
        total += w * s * ring * dth;
    }
    total
}

/// `∫ f(z) g(z)‾` over the disk with the same rule.
pub fn disk_inner<F: Fn(Complex64) -> Complex64, G: Fn(Complex64) -> Complex64>(
    f: F,
    g: G,
    r: f64,
    radial: usize,
    angles: usize,
) -> Complex64 {
    let rule = gauss_legendre(radial, 0.0, r);
    let dth = 2.0 * PI / angles as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for &(s, w) in &rule {
        for k in 0..angles {
            let z = Complex64::from_polar(s, k as f64 * dth);
            total += f(z) * g(z).conj() * (w * s * dth);
        }
    }
    total
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
