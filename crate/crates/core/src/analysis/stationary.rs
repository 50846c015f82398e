//! Stationary type probabilities for unary and vector-particle reactions,
//! together with the reversibility residuals they must satisfy.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::halton;
use crate::density::DensityFamily;
use crate::error::{Error, Result};
use crate::rates::UnaryRate;

/// Relative tolerance for `p_v b_vw = p_w b_wv` and the `ν`-sum constraint.
pub const STRUCTURE_TOLERANCE: f64 = 1e-12;

/// Number of sampled energies per reversibility check.
pub const REVERSIBILITY_SAMPLES: usize = 1000;

/// `(π₁, π₂)` solving `π₁ Y₁ a₁₂ = π₂ a₂₁`, `π₁ + π₂ = 1`, where `Y₁` is the
/// mass of `ρ₁` beyond the gap `ΔI`.
pub fn two_type_unary_stationary(a12: f64, a21: f64, rho1: &DensityFamily, gap: f64) -> Result<(f64, f64)> {
    if !(a12 >= 0.0 && a21 >= 0.0) {
        return Err(Error::invalid("rates", "must be >= 0"));
    }
    let up = rho1.survival(gap) * a12;
    if up + a21 == 0.0 {
        return Err(Error::Undefined(
            "both transition rates vanish: the chain is reducible".into(),
        ));
    }
    let pi1 = a21 / (up + a21);
    Ok((pi1, 1.0 - pi1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub pi: Vec<f64>,
    /// Largest relative reversibility residual over the sampled energies.
    pub residual: f64,
    pub samples: usize,
}

fn normalize_log(logs: &[f64]) -> Vec<f64> {
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn check_common(p: &[f64], nu: &[f64], energies: &[f64], beta: f64) -> Result<()> {
    let v = p.len();
    if v == 0 || nu.len() != v || energies.len() != v {
        return Err(Error::invalid(
            "p",
            "p, nu and internal energies need one entry per type",
        ));
    }
    if p.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("p", "stationary weights must be finite and > 0"));
    }
    if nu.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("nu", "shape parameters must be finite and > 0"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", "must be finite and > 0"));
    }
    Ok(())
}

/// Sample points `U` in `(lo, lo + 20/β)` from a Halton sequence.
fn energies_above(lo: f64, beta: f64, count: usize, offset: u64) -> impl Iterator<Item = f64> {
    (1..=count as u64).map(move |i| lo + 20.0 / beta * halton(i + offset, 2).max(1e-9))
}

/// Type law `π_v ∝ p_v e^{-βI_v} Γ(ν_v) β^{-ν_v}` for unary rates
/// `a_vw(U) = b_vw (U - I_w)^{ν_w - 1}` and shifted-Gamma full-energy laws,
/// with the reversibility residual `π_v f_v a_vw` vs `π_w f_w a_wv` sampled
/// above `max(I_v, I_w)` for every connected pair.
pub fn unary_energy_dependent_stationary(
    p: &[f64],
    b: &[Vec<f64>],
    nu: &[f64],
    energies: &[f64],
    beta: f64,
) -> Result<StationaryReport> {
    check_common(p, nu, energies, beta)?;
    let v = p.len();
    if b.len() != v || b.iter().any(|row| row.len() != v) {
        return Err(Error::invalid("b", "rate matrix must be V x V"));
    }
    for i in 0..v {
        for j in 0..v {
            if i != j && relative_gap(p[i] * b[i][j], p[j] * b[j][i]) > STRUCTURE_TOLERANCE {
                return Err(Error::invalid(
                    format!("b[{}][{}]", i + 1, j + 1),
                    format!("p_v b_vw != p_w b_wv for the pair ({}, {})", i + 1, j + 1),
                ));
            }
        }
    }
    let logs: Vec<f64> = (0..v)
        .map(|i| p[i].ln() - beta * energies[i] + ln_gamma(nu[i]) - nu[i] * beta.ln())
        .collect();
    let pi = normalize_log(&logs);
    let law = |i: usize| DensityFamily::shifted_gamma(nu[i], beta, energies[i]);
    let rate = |i: usize, j: usize| UnaryRate::PowerGap {
        coefficient: b[i][j],
        exponent: nu[j] - 1.0,
    };
    let pairs: Vec<(usize, usize)> = (0..v)
        .flat_map(|i| (i + 1..v).map(move |j| (i, j)))
        .filter(|&(i, j)| b[i][j] > 0.0 || b[j][i] > 0.0)
        .collect();
    let mut residual: f64 = 0.0;
    let mut samples = 0;
    if !pairs.is_empty() {
        let per_pair = REVERSIBILITY_SAMPLES.div_ceil(pairs.len());
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let lo = energies[i].max(energies[j]);
            for u in energies_above(lo, beta, per_pair, (k * per_pair) as u64) {
                let left = pi[i] * law(i).pdf(u) * rate(i, j).eval(u, energies[j]);
                let right = pi[j] * law(j).pdf(u) * rate(j, i).eval(u, energies[i]);
                residual = residual.max(relative_gap(left, right));
                samples += 1;
            }
        }
    }
    Ok(StationaryReport { pi, residual, samples })
}

/// A binary reaction `(v, w) -> (v', w')` between vector particles, with the
/// base rates of both directions. Types are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorChannel {
    pub from: (usize, usize),
    pub to: (usize, usize),
    pub forward: f64,
    pub backward: f64,
}

/// Type law `π_v ∝ p_v e^{-βI_v} β^{-ν_v}` for vector particles, after checking
/// the `ν`-sum constraint and reversibility of `p_î b_îĵ` on every channel.
/// The residual compares `π_î f_î a_îĵ` with `π_ĵ f_ĵ a_ĵî` where
/// `π_(v,w) = π_v π_w` and `f_î` is the shifted Gamma law of the pair.
pub fn vector_particle_stationary(
    p: &[f64],
    nu: &[f64],
    energies: &[f64],
    beta: f64,
    channels: &[VectorChannel],
) -> Result<StationaryReport> {
    check_common(p, nu, energies, beta)?;
    let v = p.len();
    for (k, ch) in channels.iter().enumerate() {
        for t in [ch.from.0, ch.from.1, ch.to.0, ch.to.1] {
            if t == 0 || t > v {
                return Err(Error::UnknownType { index: k, type_id: t });
            }
        }
        if !(ch.forward >= 0.0 && ch.backward >= 0.0) {
            return Err(Error::invalid(format!("channels[{k}]"), "rates must be >= 0"));
        }
        let s_in = nu[ch.from.0 - 1] + nu[ch.from.1 - 1];
        let s_out = nu[ch.to.0 - 1] + nu[ch.to.1 - 1];
        if (s_in - s_out).abs() > STRUCTURE_TOLERANCE * s_in.max(s_out) {
            return Err(Error::invalid(
                format!("channels[{k}]"),
                format!(
                    "ν_{} + ν_{} = {s_in} differs from ν_{} + ν_{} = {s_out}",
                    ch.from.0, ch.from.1, ch.to.0, ch.to.1
                ),
            ));
        }
        let p_in = p[ch.from.0 - 1] * p[ch.from.1 - 1];
        let p_out = p[ch.to.0 - 1] * p[ch.to.1 - 1];
        if relative_gap(p_in * ch.forward, p_out * ch.backward) > STRUCTURE_TOLERANCE {
            return Err(Error::invalid(
                format!("channels[{k}]"),
                "p_î b_îĵ != p_ĵ b_ĵî: the pair chain is not reversible for p",
            ));
        }
    }
    let logs: Vec<f64> = (0..v)
        .map(|i| p[i].ln() - beta * energies[i] - nu[i] * beta.ln())
        .collect();
    let pi = normalize_log(&logs);
    let pair = |(a, b): (usize, usize)| {
        let (a, b) = (a - 1, b - 1);
        (pi[a] * pi[b], nu[a] + nu[b], energies[a] + energies[b])
    };
    let mut residual: f64 = 0.0;
    let mut samples = 0;
    if !channels.is_empty() {
        let per = REVERSIBILITY_SAMPLES.div_ceil(channels.len());
        for (k, ch) in channels.iter().enumerate() {
            let (pi_i, nu_i, e_i) = pair(ch.from);
            let (pi_j, nu_j, e_j) = pair(ch.to);
            let (f_i, f_j) = (
                DensityFamily::shifted_gamma(nu_i, beta, e_i),
                DensityFamily::shifted_gamma(nu_j, beta, e_j),
            );
            let a_ij = UnaryRate::PowerGap {
                coefficient: ch.forward,
                exponent: nu_j - 1.0,
            };
            let a_ji = UnaryRate::PowerGap {
                coefficient: ch.backward,
                exponent: nu_i - 1.0,
            };
            for u in energies_above(e_i.max(e_j), beta, per, (k * per) as u64) {
                let left = pi_i * f_i.pdf(u) * a_ij.eval(u, e_j);
                let right = pi_j * f_j.pdf(u) * a_ji.eval(u, e_i);
                residual = residual.max(relative_gap(left, right));
                samples += 1;
            }
        }
    }
    Ok(StationaryReport { pi, residual, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_type_cases() {
        let e = DensityFamily::exponential(1.0);
        let (a, b) = two_type_unary_stationary(1.0, 1.0, &e, 0.0).unwrap();
        assert!((a - 0.5).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
        let (a, b) = two_type_unary_stationary(1.0, 1.0, &e, 2f64.ln()).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-12 && (b - 1.0 / 3.0).abs() < 1e-12);
        assert!(two_type_unary_stationary(0.0, 0.0, &e, 0.0).is_err());
    }

    #[test]
    fn equal_energies_and_shapes_reduce_to_p() {
        let p = [0.2, 0.3, 0.5];
        let b = vec![vec![0.0, 1.5, 1.0], vec![1.0, 0.0, 0.6], vec![0.4, 0.36, 0.0]];
        let r = unary_energy_dependent_stationary(&p, &b, &[1.5; 3], &[0.7; 3], 1.3).unwrap();
        for (x, y) in r.pi.iter().zip(p) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(r.residual < 1e-10);
    }

    #[test]
    fn two_levels() {
        let b = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let r = unary_energy_dependent_stationary(&[0.5, 0.5], &b, &[1.0, 1.0], &[0.0, 1.0], 1.0).unwrap();
        let e = (-1f64).exp();
        assert!((r.pi[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((r.pi[0] - 0.7311).abs() < 1e-4 && (r.pi[1] - 0.2689).abs() < 1e-4);
        assert!(r.residual < 1e-10);
        assert_eq!(r.samples, REVERSIBILITY_SAMPLES);
    }

    #[test]
    fn irreversible_rates_are_named() {
        let b = vec![vec![0.0, 2.0], vec![1.0, 0.0]];
        match unary_energy_dependent_stationary(&[0.5, 0.5], &b, &[1.0, 1.0], &[0.0, 1.0], 1.0) {
            Err(Error::Invalid { field, .. }) => assert_eq!(field, "b[1][2]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vector_particles() {
        let p = [0.6, 0.4];
        let ch = VectorChannel {
            from: (1, 1),
            to: (1, 2),
            forward: 0.4 * 2.0,
            backward: 0.6 * 2.0,
        };
        let r = vector_particle_stationary(&p, &[2.0, 2.0], &[0.0, 0.8], 1.5, &[ch]).unwrap();
        assert!(r.residual < 1e-10, "{}", r.residual);
        // with constant ν this is the unary law without its Γ factor
        let b = vec![vec![0.0, 0.4], vec![0.6, 0.0]];
        let unary = unary_energy_dependent_stationary(&p, &b, &[2.0, 2.0], &[0.0, 0.8], 1.5).unwrap();
        for (x, y) in r.pi.iter().zip(&unary.pi) {
            assert!((x - y).abs() < 1e-12);
        }
        let bad = VectorChannel {
            from: (1, 1),
            to: (2, 2),
            forward: 1.0,
            backward: 1.0,
        };
        match vector_particle_stationary(&p, &[1.0, 2.0], &[0.0, 0.8], 1.5, &[bad]) {
            Err(Error::Invalid { field, .. }) => assert_eq!(field, "channels[0]"),
            other => panic!("{other:?}"),
        }
    }
}
