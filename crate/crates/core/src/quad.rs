//! Fixed-order Gauss–Legendre quadrature on composite panels.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights on [-1, 1] for an `n`-point rule, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn rule16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Integral of `f` over `[a, b]` with a 16-point rule on `panels` panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = rule16();
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let half = 0.5 * width;
        let mid = lo + half;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            s += w * f(mid + half * x);
        }
        total += s * half;
    }
    total
}

/// Like [`integrate`], after the substitution `x = a + (b - a)·g(t)` with
/// `g(t) = t³(10 - 15t + 6t²)`. The Jacobian vanishes to second order at both
/// ends, which tames algebraic endpoint behavior such as `√x` or `x^(-1/2)`.
pub fn integrate_clustered<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let len = b - a;
    integrate(
        |t| {
            let g = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
            let dg = 30.0 * t * t * (1.0 - t) * (1.0 - t);
            f(a + len * g) * len * dg
        },
        0.0,
        1.0,
        panels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [2, 5, 16, 31] {
            let (_, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn exact_for_polynomials_and_smooth() {
        assert!((integrate(|x| x.powi(7), 0.0, 2.0, 1) - 32.0).abs() < 1e-12);
        assert!((integrate(f64::exp, 0.0, 1.0, 4) - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn clustered_handles_endpoint_singularities() {
        assert!((integrate_clustered(|x| x.sqrt(), 0.0, 1.0, 8) - 2.0 / 3.0).abs() < 1e-12);
        let v = integrate_clustered(|x| 1.0 / x.sqrt(), 0.0, 1.0, 32);
        assert!((v - 2.0).abs() < 1e-5, "{v}");
    }
}
