//! Canonical kernels, convolution identities, admissible density pairs and
//! the monotone map onto the exponential law.

use crate::density::DensityFamily;
use crate::error::{Error, Result};
use crate::kernel::{convolution_at, EnergySplit};

/// `ρ_v(x) ρ_w(T - x) / Z(T)` for `x` in `[0, T]`, zero outside.
pub fn canonical_kernel_density(rho_v: &DensityFamily, rho_w: &DensityFamily, total: f64, x: f64) -> Result<f64> {
    if !(x >= 0.0 && x <= total) {
        return Ok(0.0);
    }
    EnergySplit::canonical(rho_v.clone(), rho_w.clone()).density(x, total)
}

/// Density of `ξ_v + ξ_w` at `total`.
pub fn convolution_density(rho_v: &DensityFamily, rho_w: &DensityFamily, total: f64) -> f64 {
    convolution_at(rho_v, rho_w, total)
}

/// `max_T |ρ_vw(T) - ρ_v'w'(T)|` over `points`.
pub fn convolution_equality_check(
    (rho_v, rho_w): (&DensityFamily, &DensityFamily),
    (rho_v1, rho_w1): (&DensityFamily, &DensityFamily),
    points: &[f64],
) -> f64 {
    points
        .iter()
        .map(|&t| (convolution_at(rho_v, rho_w, t) - convolution_at(rho_v1, rho_w1, t)).abs())
        .fold(0.0, f64::max)
}

/// `max_x |ρ₁(x + ΔI) / Y₁ - ρ₂(x)|` over `points`, with `Y₁` the mass of
/// `ρ₁` beyond `ΔI`.
pub fn admissible_pair_check(rho1: &DensityFamily, rho2: &DensityFamily, gap: f64, points: &[f64]) -> Result<f64> {
    if !(gap >= 0.0) {
        return Err(Error::invalid("gap", "internal energy gap must be >= 0"));
    }
    let tail = rho1.survival(gap);
    if !(tail > 0.0) {
        return Err(Error::Undefined(format!(
            "no mass beyond the gap {gap}: conditioning on a null event"
        )));
    }
    Ok(points
        .iter()
        .map(|&x| (rho1.pdf(x + gap) / tail - rho2.pdf(x)).abs())
        .fold(0.0, f64::max))
}

/// Worst admissibility residual of `β e^{-βx}` against itself over every
/// pair of internal energies.
pub fn exponential_admissibility(beta: f64, energies: &[f64], points: &[f64]) -> Result<f64> {
    let rho = DensityFamily::exponential(beta);
    let mut worst: f64 = 0.0;
    for (i, a) in energies.iter().enumerate() {
        for b in &energies[i + 1..] {
            worst = worst.max(admissible_pair_check(&rho, &rho, (b - a).abs(), points)?);
        }
    }
    Ok(worst)
}

/// `U(x)` with `∫_0^x ρ = ∫_0^U β e^{-βy} dy`, i.e. `-ln(1 - F(x)) / β`.
pub fn measure_transform(rho: &DensityFamily, beta: f64, x: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::invalid("beta", "must be > 0"));
    }
    let survival = rho.survival(x);
    if !(survival > 0.0) {
        return Err(Error::Undefined(format!(
            "x = {x} lies beyond the support: infinite image"
        )));
    }
    Ok(-survival.ln() / beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_clustered;

    #[test]
    fn exponential_pair_gives_uniform_kernel() {
        let e = DensityFamily::exponential(1.7);
        for x in [0.0, 0.3, 1.9, 2.5] {
            assert!((canonical_kernel_density(&e, &e, 2.5, x).unwrap() - 0.4).abs() < 1e-14);
        }
        assert_eq!(canonical_kernel_density(&e, &e, 2.5, 2.6).unwrap(), 0.0);
        assert_eq!(canonical_kernel_density(&e, &e, 2.5, -0.1).unwrap(), 0.0);
    }

    #[test]
    fn gamma_exponential_kernel_is_beta() {
        let g = DensityFamily::gamma(2.0, 1.0);
        let e = DensityFamily::gamma(1.0, 1.0);
        let d = canonical_kernel_density(&g, &e, 1.0, 0.5).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        // against the definition with Z by quadrature
        let z = integrate_clustered(|y| g.pdf(y) * e.pdf(1.0 - y), 0.0, 1.0, 8);
        assert!((g.pdf(0.5) * e.pdf(0.5) / z - d).abs() < 1e-12);
    }

    #[test]
    fn canonical_kernels_integrate_to_one() {
        let cases = [
            (DensityFamily::gamma(2.0, 1.0), DensityFamily::exponential(1.0)),
            (DensityFamily::gamma(1.5, 2.0), DensityFamily::uniform(0.0, 4.0)),
            (DensityFamily::exponential(1.0), DensityFamily::exponential(3.0)),
        ];
        for (a, b) in cases {
            for t in [0.3, 1.0, 3.7] {
                let mass = integrate_clustered(|x| canonical_kernel_density(&a, &b, t, x).unwrap(), 0.0, t, 16);
                assert!((mass - 1.0).abs() < 1e-8, "{a:?} {b:?} {t}: {mass}");
            }
        }
    }

    #[test]
    fn empty_support_faults() {
        let far = DensityFamily::uniform(2.0, 3.0);
        assert!(canonical_kernel_density(&far, &DensityFamily::exponential(1.0), 1.0, 0.5).is_err());
    }

    #[test]
    fn convolutions() {
        let e = DensityFamily::exponential(1.0);
        for x in [0.5, 1.0, 4.0] {
            assert!((convolution_density(&e, &e, x) - x * (-x).exp()).abs() < 1e-14);
        }
        assert_eq!(convolution_density(&e, &e, 0.0), 0.0);
        let points: Vec<f64> = (0..200).map(|k| 0.05 * k as f64).collect();
        let g = |s| DensityFamily::gamma(s, 2.0);
        assert!(convolution_equality_check((&g(1.0), &g(3.0)), (&g(2.0), &g(2.0)), &points) < 1e-8);
        assert_eq!(convolution_equality_check((&e, &e), (&e, &e), &points), 0.0);
        let e2 = DensityFamily::exponential(2.0);
        assert!(convolution_equality_check((&e, &e), (&e2, &e2), &points) > 0.1);
        // a generic pair goes through quadrature
        let u = DensityFamily::uniform(0.0, 1.0);
        assert!((convolution_density(&u, &u, 0.5) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn admissible_pairs() {
        let points: Vec<f64> = (0..100).map(|k| 0.1 * k as f64).collect();
        let e = DensityFamily::exponential(1.3);
        assert!(admissible_pair_check(&e, &e, 0.8, &points).unwrap() < 1e-12);
        let shifted = e.clone().shifted(0.8);
        assert!(admissible_pair_check(&shifted, &e, 0.8, &points).unwrap() < 1e-12);
        let u = DensityFamily::uniform(0.0, 2.0);
        assert!(admissible_pair_check(&u, &DensityFamily::exponential(1.0), 1.0, &points).unwrap() > 0.3);
        assert!(admissible_pair_check(&DensityFamily::uniform(0.0, 1.0), &e, 2.0, &points).is_err());
        assert!(exponential_admissibility(2.0, &[0.0, 1.0, std::f64::consts::SQRT_2], &points).unwrap() < 1e-12);
    }

    #[test]
    fn transform_to_exponential() {
        let e = DensityFamily::exponential(2.0);
        for x in [0.1, 1.0, 3.0] {
            assert!((measure_transform(&e, 2.0, x).unwrap() - x).abs() < 1e-12);
        }
        let u = DensityFamily::uniform(0.0, 1.0);
        assert!((measure_transform(&u, 1.0, 0.5).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!(measure_transform(&u, 1.0, 1.0).is_err());
        let xs = [0.1, 0.2, 0.5, 0.9];
        let us: Vec<f64> = xs.iter().map(|&x| measure_transform(&u, 1.0, x).unwrap()).collect();
        assert!(us.windows(2).all(|w| w[0] < w[1]));
    }
}
