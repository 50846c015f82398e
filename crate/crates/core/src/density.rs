//! Closed catalog of one-dimensional energy densities on the half line.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a tabulated density.
pub const MASS_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityFamily {
    /// `rate · exp(-rate · x)`.
    Exponential {
        rate: f64,
    },
    /// `rate^shape x^(shape-1) exp(-rate x) / Γ(shape)`.
    Gamma {
        shape: f64,
        rate: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Exponential modulated by `1 + amplitude · sin(frequency · x)`,
    /// renormalized. Used as a non-equilibrium perturbation.
    ExponentialSine {
        rate: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Piecewise constant on `values.len()` equal cells of `[0, x_max]`.
    Tabulated {
        x_max: f64,
        values: Vec<f64>,
    },
    /// `base(x - offset)` for `x >= offset`, zero below.
    Shifted {
        base: Box<DensityFamily>,
        offset: f64,
    },
}

impl DensityFamily {
    pub fn exponential(rate: f64) -> Self {
        DensityFamily::Exponential { rate }
    }

    pub fn gamma(shape: f64, rate: f64) -> Self {
        DensityFamily::Gamma { shape, rate }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        DensityFamily::Uniform { lo, hi }
    }

    /// Gamma law in full energy, supported on `U > shift`.
    pub fn shifted_gamma(shape: f64, rate: f64, shift: f64) -> Self {
        DensityFamily::gamma(shape, rate).shifted(shift)
    }

    pub fn shifted(self, offset: f64) -> Self {
        if offset == 0.0 {
            return self;
        }
        DensityFamily::Shifted {
            base: Box::new(self),
            offset,
        }
    }

    /// Tabulated density scaled to unit mass.
    pub fn tabulated_normalized(x_max: f64, mut values: Vec<f64>) -> Result<Self> {
        let h = x_max / values.len() as f64;
        let mass: f64 = values.iter().sum::<f64>() * h;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid("density.values", "tabulated density has no mass"));
        }
        for v in &mut values {
            *v /= mass;
        }
        let d = DensityFamily::Tabulated { x_max, values };
        d.validate("density")?;
        Ok(d)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(
                    format!("{field}.{name}"),
                    format!("must be > 0, got {v}"),
                ))
            }
        };
        match self {
            DensityFamily::Exponential { rate } => positive("rate", *rate),
            DensityFamily::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)
            }
            DensityFamily::Uniform { lo, hi } => {
                if *lo >= 0.0 && hi > lo && hi.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        field,
                        format!("uniform needs 0 <= lo < hi, got [{lo}, {hi}]"),
                    ))
                }
            }
            DensityFamily::ExponentialSine {
                rate,
                amplitude,
                frequency,
            } => {
                positive("rate", *rate)?;
                if !(amplitude.abs() < 1.0 && frequency.is_finite()) {
                    return Err(Error::invalid(
                        format!("{field}.amplitude"),
                        "|amplitude| < 1 keeps the density positive",
                    ));
                }
                Ok(())
            }
            DensityFamily::Tabulated { x_max, values } => {
                positive("x_max", *x_max)?;
                if values.is_empty() || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::invalid(
                        format!("{field}.values"),
                        "needs at least one finite nonnegative value",
                    ));
                }
                let mass = values.iter().sum::<f64>() * x_max / values.len() as f64;
                if (mass - 1.0).abs() > MASS_TOLERANCE {
                    return Err(Error::invalid(
                        format!("{field}.values"),
                        format!("density integrates to {mass}, expected 1 within {MASS_TOLERANCE}"),
                    ));
                }
                Ok(())
            }
            DensityFamily::Shifted { base, offset } => {
                if !(*offset >= 0.0 && offset.is_finite()) {
                    return Err(Error::invalid(format!("{field}.offset"), "must be finite and >= 0"));
                }
                base.validate(&format!("{field}.base"))
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            DensityFamily::Exponential { rate } => rate * (-rate * x).exp(),
            DensityFamily::Gamma { shape, rate } => gamma_pdf(*shape, *rate, x),
            DensityFamily::Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            DensityFamily::ExponentialSine {
                rate,
                amplitude,
                frequency,
            } => {
                let z = sine_norm(*rate, *amplitude, *frequency);
                rate * (-rate * x).exp() * (1.0 + amplitude * (frequency * x).sin()) / z
            }
            DensityFamily::Tabulated { x_max, values } => {
                if x > *x_max {
                    return 0.0;
                }
                let h = x_max / values.len() as f64;
                let k = ((x / h) as usize).min(values.len() - 1);
                values[k]
            }
            DensityFamily::Shifted { base, offset } => {
                if x < *offset {
                    0.0
                } else {
                    base.pdf(x - offset)
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            DensityFamily::Exponential { rate } => -(-rate * x).exp_m1(),
            DensityFamily::Gamma { shape, rate } => gamma_lr(*shape, rate * x),
            DensityFamily::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            DensityFamily::ExponentialSine {
                rate,
                amplitude,
                frequency,
            } => {
                let (b, w) = (*rate, *frequency);
                let e = (-b * x).exp();
                let sin_part = (w - e * (b * (w * x).sin() + w * (w * x).cos())) / (b * b + w * w);
                ((1.0 - e) + amplitude * b * sin_part) / sine_norm(b, *amplitude, w)
            }
            DensityFamily::Tabulated { x_max, values } => {
                let h = x_max / values.len() as f64;
                let pos = (x / h).min(values.len() as f64);
                let k = pos as usize;
                let full: f64 = values[..k].iter().sum::<f64>() * h;
                let part = if k < values.len() {
                    values[k] * (pos - k as f64) * h
                } else {
                    0.0
                };
                (full + part).min(1.0)
            }
            DensityFamily::Shifted { base, offset } => base.cdf(x - offset),
        }
    }

    /// Probability of `(x, ∞)`, computed without cancellation where possible.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            DensityFamily::Exponential { rate } if x > 0.0 => (-rate * x).exp(),
            DensityFamily::Gamma { shape, rate } if x > 0.0 => statrs::function::gamma::gamma_ur(*shape, rate * x),
            DensityFamily::Shifted { base, offset } => base.survival(x - offset),
            _ => 1.0 - self.cdf(x),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DensityFamily::Exponential { rate } => 1.0 / rate,
            DensityFamily::Gamma { shape, rate } => shape / rate,
            DensityFamily::Uniform { lo, hi } => 0.5 * (lo + hi),
            DensityFamily::ExponentialSine {
                rate,
                amplitude,
                frequency,
            } => {
                // ∫ x b e^{-bx} sin(wx) dx = 2 b^2 w / (b^2 + w^2)^2
                let (b, w) = (*rate, *frequency);
                let d = b * b + w * w;
                (1.0 / b + amplitude * 2.0 * b * b * w / (d * d)) / sine_norm(b, *amplitude, w)
            }
            DensityFamily::Tabulated { x_max, values } => {
                let h = x_max / values.len() as f64;
                values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * (k as f64 + 0.5) * h * h)
                    .sum()
            }
            DensityFamily::Shifted { base, offset } => base.mean() + offset,
        }
    }

    /// Left end of the support.
    pub fn support_start(&self) -> f64 {
        match self {
            DensityFamily::Uniform { lo, .. } => *lo,
            DensityFamily::Shifted { base, offset } => base.support_start() + offset,
            _ => 0.0,
        }
    }

    /// Right end of the support, `+∞` for unbounded families.
    pub fn support_end(&self) -> f64 {
        match self {
            DensityFamily::Uniform { hi, .. } => *hi,
            DensityFamily::Tabulated { x_max, .. } => *x_max,
            DensityFamily::Shifted { base, offset } => base.support_end() + offset,
            _ => f64::INFINITY,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DensityFamily::Exponential { rate } => Exp::new(*rate).expect("validated").sample(rng),
            DensityFamily::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / rate).expect("validated").sample(rng),
            DensityFamily::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            DensityFamily::ExponentialSine {
                rate,
                amplitude,
                frequency,
            } => {
                let exp = Exp::new(*rate).expect("validated");
                loop {
                    let x = exp.sample(rng);
                    let accept = (1.0 + amplitude * (frequency * x).sin()) / (1.0 + amplitude.abs());
                    if rng.random::<f64>() < accept {
                        return x;
                    }
                }
            }
            DensityFamily::Tabulated { x_max, values } => {
                let h = x_max / values.len() as f64;
                let target = rng.random::<f64>();
                let mut acc = 0.0;
                for (k, v) in values.iter().enumerate() {
                    let mass = v * h;
                    if acc + mass >= target && mass > 0.0 {
                        return (k as f64 + (target - acc) / mass) * h;
                    }
                    acc += mass;
                }
                // rounding left the target above the accumulated mass
                let last = values.iter().rposition(|v| *v > 0.0).unwrap_or(0);
                (last as f64 + 1.0) * h
            }
            DensityFamily::Shifted { base, offset } => offset + base.sample(rng),
        }
    }
}

fn sine_norm(rate: f64, amplitude: f64, frequency: f64) -> f64 {
    1.0 + amplitude * rate * frequency / (rate * rate + frequency * frequency)
}

fn gamma_pdf(shape: f64, rate: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            rate
        } else {
            0.0
        };
    }
    ((shape - 1.0) * x.ln() - rate * x + shape * rate.ln() - ln_gamma(shape)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> Vec<DensityFamily> {
        vec![
            DensityFamily::exponential(2.0),
            DensityFamily::gamma(2.5, 1.5),
            DensityFamily::uniform(0.5, 2.0),
            DensityFamily::ExponentialSine {
                rate: 1.0,
                amplitude: 0.3,
                frequency: 1.0,
            },
            DensityFamily::tabulated_normalized(4.0, vec![1.0, 2.0, 3.0, 0.5]).unwrap(),
            DensityFamily::shifted_gamma(2.0, 1.0, 1.0),
        ]
    }

    #[test]
    fn densities_have_unit_mass_by_quadrature() {
        for d in catalog() {
            d.validate("d").unwrap();
            // split at support kinks so each panel set sees a smooth integrand
            let (a, b) = (d.support_start(), d.support_end().min(80.0));
            let mass = integrate(|x| d.pdf(x), a, b, 400);
            assert!((mass - 1.0).abs() < 1e-8, "{d:?} mass {mass}");
        }
    }

    // integrate in pieces split at multiples of 0.5, where the catalog's kinks sit
    fn split_integral(d: &DensityFamily, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        let mut lo = a;
        while lo < b {
            let hi = ((lo * 2.0).floor() / 2.0 + 0.5).min(b);
            total += integrate(|y| d.pdf(y), lo, hi, 20);
            lo = hi;
        }
        total
    }

    #[test]
    fn cdf_matches_integrated_pdf() {
        for d in catalog() {
            for x in [0.3, 1.0, 1.7, 3.2] {
                let a = d.support_start().min(x);
                let q = split_integral(&d, a, x);
                assert!((d.cdf(x) - q).abs() < 1e-9, "{d:?} at {x}: {} vs {q}", d.cdf(x));
            }
        }
    }

    #[test]
    fn means_match_quadrature() {
        for d in catalog() {
            let (a, b) = (d.support_start(), d.support_end().min(80.0));
            let q = integrate(|x| x * d.pdf(x), a, b, 400);
            assert!((d.mean() - q).abs() < 1e-8, "{d:?}");
        }
    }

    #[test]
    fn sample_means_are_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in catalog() {
            let n = 200_000;
            let m: f64 = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
            assert!((m - d.mean()).abs() < 0.02 * (1.0 + d.mean()), "{d:?}: {m}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DensityFamily::gamma(0.0, 1.0).validate("rho").is_err());
        assert!(DensityFamily::exponential(-1.0).validate("rho").is_err());
        assert!(DensityFamily::Tabulated {
            x_max: 1.0,
            values: vec![0.5, 0.5]
        }
        .validate("rho")
        .is_err());
    }
}
