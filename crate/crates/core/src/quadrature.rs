//! Gauss rules on intervals and triangles.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((0.5 * (1.0 - x), 0.5 * w));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// Rule on the reference triangle `{ξ, η ≥ 0, ξ + η ≤ 1}` exact for
/// polynomials of total degree `degree`; weights sum to 1/2.
pub fn triangle_rule(degree: usize) -> Vec<([f64; 2], f64)> {
    let n = degree / 2 + 1;
    let g = gauss_legendre(n);
    let g1 = gauss_legendre(n + 1);
    let mut rule = Vec::with_capacity(n * (n + 1));
    for &(u, wu) in &g1 {
        for &(v, wv) in &g {
            rule.push(([u, v * (1.0 - u)], wu * wv * (1.0 - u)));
        }
    }
    rule
}
