//! Scattering kernels: the conditional law of the products `(v1, U), v1'`
//! given the colliding pair, in both sampleable and evaluable form.
//!
//! A kernel is a list of outcomes. Each outcome names the product types, a
//! nonnegative selection weight, and an [`EnergySplit`] describing how the
//! available kinetic energy `S` is shared: the first product receives `U`,
//! the second `S - U`. Weights are renormalized over the outcomes that are
//! feasible at the sampled input energies.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::density::{DensityFamily, MASS_TOLERANCE};
use crate::error::{Error, Result};
use crate::kinetics::{available_kinetic, CollisionOutcome, TypeId, TypeTable};
use crate::quad::{integrate, integrate_clustered};

/// Cells used to tabulate a canonical split with no closed form.
const NUMERIC_CELLS: usize = 1024;
/// Quadrature panels for normalizing constants.
const NORM_PANELS: usize = 64;

/// How the available kinetic energy `S` is split between the two products.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergySplit {
    /// `U ~ Uniform[0, S]`.
    Uniform,
    /// Conditional law of `ξ_first` given `ξ_first + ξ_second = S` for
    /// independent `ξ_first ~ first`, `ξ_second ~ second`.
    Canonical {
        first: DensityFamily,
        second: DensityFamily,
    },
    /// `U / S` has the piecewise-constant density `values` on equal cells of
    /// `[0, 1]`.
    Table { values: Vec<f64> },
}

/// Closed-form reductions of a canonical split.
enum CanonicalForm {
    Uniform,
    /// Density proportional to `exp(-lambda x)` on `[0, S]`.
    TruncatedExp(f64),
    /// `U / S ~ Beta(a, b)`.
    Beta(f64, f64),
    Numeric,
}

fn as_gamma(d: &DensityFamily) -> Option<(f64, f64)> {
    match *d {
        DensityFamily::Exponential { rate } => Some((1.0, rate)),
        DensityFamily::Gamma { shape, rate } => Some((shape, rate)),
        _ => None,
    }
}

fn canonical_form(first: &DensityFamily, second: &DensityFamily) -> CanonicalForm {
    match (as_gamma(first), as_gamma(second)) {
        (Some((1.0, r1)), Some((1.0, r2))) if r1 == r2 => CanonicalForm::Uniform,
        (Some((1.0, r1)), Some((1.0, r2))) => CanonicalForm::TruncatedExp(r1 - r2),
        (Some((a, r1)), Some((b, r2))) if r1 == r2 => CanonicalForm::Beta(a, b),
        _ => CanonicalForm::Numeric,
    }
}

/// Range of `x` where both `first(x)` and `second(S - x)` can be nonzero.
fn joint_support(first: &DensityFamily, second: &DensityFamily, s: f64) -> (f64, f64) {
    let lo = first.support_start().max(s - second.support_end()).max(0.0);
    let hi = first.support_end().min(s - second.support_start()).min(s);
    (lo, hi)
}

/// `Z(S) = ∫ first(x) second(S - x) dx`, the density of the sum at `S`.
pub fn convolution_at(first: &DensityFamily, second: &DensityFamily, s: f64) -> f64 {
    if s < 0.0 {
        return 0.0;
    }
    match (as_gamma(first), as_gamma(second)) {
        (Some((a, r1)), Some((b, r2))) if r1 == r2 => {
            if s == 0.0 {
                return if a + b < 1.0 {
                    f64::INFINITY
                } else if a + b == 1.0 {
                    r1
                } else {
                    0.0
                };
            }
            DensityFamily::gamma(a + b, r1).pdf(s)
        }
        (Some((1.0, r1)), Some((1.0, r2))) => r1 * r2 * ((-r2 * s).exp() - (-r1 * s).exp()) / (r1 - r2),
        _ => {
            let (lo, hi) = joint_support(first, second, s);
            if hi <= lo {
                return 0.0;
            }
            integrate_clustered(|x| first.pdf(x) * second.pdf(s - x), lo, hi, NORM_PANELS)
        }
    }
}

impl EnergySplit {
    pub fn canonical(first: DensityFamily, second: DensityFamily) -> Self {
        EnergySplit::Canonical { first, second }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            EnergySplit::Uniform => Ok(()),
            EnergySplit::Canonical { first, second } => {
                first.validate(&format!("{field}.first"))?;
                second.validate(&format!("{field}.second"))
            }
            EnergySplit::Table { values } => {
                if values.is_empty() || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::invalid(
                        format!("{field}.values"),
                        "needs finite nonnegative values",
                    ));
                }
                let mass = values.iter().sum::<f64>() / values.len() as f64;
                if (mass - 1.0).abs() > MASS_TOLERANCE {
                    return Err(Error::invalid(
                        format!("{field}.values"),
                        format!("fraction density integrates to {mass}, expected 1"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Normalizing constant needed by [`EnergySplit::density_with`] at total
    /// `s`; 1 for every closed form. Faults when the conditioning event has no
    /// mass.
    pub fn normalizer(&self, s: f64) -> Result<f64> {
        match self {
            EnergySplit::Canonical { first, second } => {
                if let CanonicalForm::Numeric = canonical_form(first, second) {
                    let z = convolution_at(first, second, s);
                    if z > 0.0 && z.is_finite() {
                        Ok(z)
                    } else if s == 0.0 {
                        Ok(1.0)
                    } else {
                        Err(Error::EmptyConditioning { total: s })
                    }
                } else {
                    Ok(1.0)
                }
            }
            _ => Ok(1.0),
        }
    }

    /// Density of the first product's energy `u` given the total `s`, using a
    /// normalizer from [`EnergySplit::normalizer`]. Zero outside `[0, s]`; a
    /// degenerate interval `s = 0` is a point mass and reports zero.
    pub fn density_with(&self, u: f64, s: f64, z: f64) -> f64 {
        if !(s > 0.0) || u < 0.0 || u > s {
            return 0.0;
        }
        match self {
            EnergySplit::Uniform => 1.0 / s,
            EnergySplit::Table { values } => {
                let n = values.len();
                let k = ((u / s * n as f64) as usize).min(n - 1);
                values[k] / s
            }
            EnergySplit::Canonical { first, second } => match canonical_form(first, second) {
                CanonicalForm::Uniform => 1.0 / s,
                CanonicalForm::TruncatedExp(lambda) => {
                    if lambda == 0.0 {
                        1.0 / s
                    } else {
                        lambda * (-lambda * u).exp() / -(-lambda * s).exp_m1()
                    }
                }
                CanonicalForm::Beta(a, b) => {
                    let x = u / s;
                    if (x == 0.0 && a < 1.0) || (x == 1.0 && b < 1.0) {
                        return f64::INFINITY;
                    }
                    let pow = |p: f64, y: f64| if p == 0.0 { 0.0 } else { p * y.ln() };
                    let ln = pow(a - 1.0, x) + pow(b - 1.0, 1.0 - x) - ln_beta(a, b);
                    ln.exp() / s
                }
                CanonicalForm::Numeric => first.pdf(u) * second.pdf(s - u) / z,
            },
        }
    }

    pub fn density(&self, u: f64, s: f64) -> Result<f64> {
        let z = self.normalizer(s)?;
        Ok(self.density_with(u, s, z))
    }

    /// Draw the first product's share of `s`.
    pub fn sample<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<f64> {
        if s <= 0.0 {
            return Ok(0.0);
        }
        let u = match self {
            EnergySplit::Uniform => rng.random::<f64>() * s,
            EnergySplit::Table { values } => {
                let n = values.len() as f64;
                let target = rng.random::<f64>() * values.iter().sum::<f64>();
                let mut acc = 0.0;
                let mut pick = values.len() - 1;
                for (k, v) in values.iter().enumerate() {
                    if acc + v > target {
                        pick = k;
                        break;
                    }
                    acc += v;
                }
                let within = if values[pick] > 0.0 {
                    (target - acc) / values[pick]
                } else {
                    0.5
                };
                (pick as f64 + within.clamp(0.0, 1.0)) / n * s
            }
            EnergySplit::Canonical { first, second } => sample_canonical(first, second, s, rng)?,
        };
        Ok(u.clamp(0.0, s))
    }
}

fn sample_canonical<R: Rng + ?Sized>(
    first: &DensityFamily,
    second: &DensityFamily,
    s: f64,
    rng: &mut R,
) -> Result<f64> {
    match canonical_form(first, second) {
        CanonicalForm::Uniform => Ok(rng.random::<f64>() * s),
        CanonicalForm::TruncatedExp(lambda) => {
            let u: f64 = rng.random();
            Ok(-(u * (-lambda * s).exp_m1()).ln_1p() / lambda)
        }
        CanonicalForm::Beta(a, b) => Ok(s * Beta::new(a, b).expect("validated shapes").sample(rng)),
        CanonicalForm::Numeric => {
            let (lo, hi) = joint_support(first, second, s);
            if hi <= lo {
                return Err(Error::EmptyConditioning { total: s });
            }
            let h = (hi - lo) / NUMERIC_CELLS as f64;
            let mut cum = Vec::with_capacity(NUMERIC_CELLS);
            let mut acc = 0.0;
            for k in 0..NUMERIC_CELLS {
                let x = lo + (k as f64 + 0.5) * h;
                acc += first.pdf(x) * second.pdf(s - x);
                cum.push(acc);
            }
            if !(acc > 0.0 && acc.is_finite()) {
                return Err(Error::EmptyConditioning { total: s });
            }
            let target = rng.random::<f64>() * acc;
            let k = cum.partition_point(|&c| c <= target).min(NUMERIC_CELLS - 1);
            Ok(lo + (k as f64 + rng.random::<f64>()) * h)
        }
    }
}

/// First product's share for the uniform kernel on `[0, t + u]`.
pub fn sample_uniform_kernel<R: Rng + ?Sized>(t: f64, u: f64, rng: &mut R) -> f64 {
    EnergySplit::Uniform
        .sample(t + u, rng)
        .expect("uniform split never faults")
}

/// Draw `x` from `first(x) second(total - x) / Z(total)` on `[0, total]`.
pub fn sample_canonical_kernel<R: Rng + ?Sized>(
    first: &DensityFamily,
    second: &DensityFamily,
    total: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if convolution_at(first, second, total) <= 0.0 {
        return Err(Error::EmptyConditioning { total });
    }
    let x = sample_canonical(first, second, total, rng)?.clamp(0.0, total);
    Ok((x, total - x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelOutcome {
    pub products: [TypeId; 2],
    #[serde(default = "one")]
    pub weight: f64,
    pub split: EnergySplit,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringKernel {
    pub outcomes: Vec<KernelOutcome>,
}

impl ScatteringKernel {
    /// Products equal the reactants; energy split uniformly.
    pub fn uniform(a: TypeId, b: TypeId) -> Self {
        ScatteringKernel {
            outcomes: vec![KernelOutcome {
                products: [a, b],
                weight: 1.0,
                split: EnergySplit::Uniform,
            }],
        }
    }

    /// Type-preserving canonical kernel built from the densities of `a`, `b`.
    pub fn canonical(a: TypeId, b: TypeId, rho_a: DensityFamily, rho_b: DensityFamily) -> Self {
        ScatteringKernel {
            outcomes: vec![KernelOutcome {
                products: [a, b],
                weight: 1.0,
                split: EnergySplit::canonical(rho_a, rho_b),
            }],
        }
    }

    pub fn validate(&self, types: &TypeTable, field: &str) -> Result<()> {
        if self.outcomes.is_empty() {
            return Err(Error::invalid(field, "kernel needs at least one outcome"));
        }
        for (k, o) in self.outcomes.iter().enumerate() {
            let f = format!("{field}.outcomes[{k}]");
            types.check(o.products[0], &format!("{f}.products"))?;
            types.check(o.products[1], &format!("{f}.products"))?;
            if !(o.weight >= 0.0 && o.weight.is_finite()) {
                return Err(Error::invalid(format!("{f}.weight"), "must be finite and >= 0"));
            }
            o.split.validate(&format!("{f}.split"))?;
        }
        if self.outcomes.iter().all(|o| o.weight == 0.0) {
            return Err(Error::invalid(field, "all outcome weights are zero"));
        }
        Ok(())
    }

    /// Sum of weights over outcomes feasible for this input.
    pub fn feasible_weight(&self, types: &TypeTable, a: (TypeId, f64), b: (TypeId, f64)) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| available_kinetic(types, a, b, (o.products[0], o.products[1])) >= 0.0)
            .map(|o| o.weight)
            .sum()
    }

    /// Draw an outcome for inputs `a` (first slot) and `b`. `None` when no
    /// outcome is feasible: the collision does nothing.
    pub fn choose<R: Rng + ?Sized>(
        &self,
        types: &TypeTable,
        a: (TypeId, f64),
        b: (TypeId, f64),
        rng: &mut R,
    ) -> Result<Option<CollisionOutcome>> {
        let total = self.feasible_weight(types, a, b);
        if total <= 0.0 {
            return Ok(None);
        }
        let mut target = rng.random::<f64>() * total;
        let mut chosen = None;
        for o in &self.outcomes {
            let s = available_kinetic(types, a, b, (o.products[0], o.products[1]));
            if s < 0.0 || o.weight == 0.0 {
                continue;
            }
            chosen = Some((o, s));
            if target < o.weight {
                break;
            }
            target -= o.weight;
        }
        let (o, s) = chosen.expect("positive feasible weight");
        let energy = o.split.sample(s, rng)?;
        Ok(Some(CollisionOutcome {
            first: o.products[0],
            energy,
            second: o.products[1],
        }))
    }

    /// `P((first, u), second | a, b)`: density of the first product's energy,
    /// jointly with the product types.
    pub fn density(
        &self,
        types: &TypeTable,
        a: (TypeId, f64),
        b: (TypeId, f64),
        first: TypeId,
        u: f64,
        second: TypeId,
    ) -> Result<f64> {
        let total = self.feasible_weight(types, a, b);
        if total <= 0.0 {
            return Ok(0.0);
        }
        let mut p = 0.0;
        for o in &self.outcomes {
            if o.products != [first, second] || o.weight == 0.0 {
                continue;
            }
            let s = available_kinetic(types, a, b, (first, second));
            if s < 0.0 {
                continue;
            }
            p += o.weight / total * o.split.density(u, s)?;
        }
        Ok(p)
    }

    /// Largest deviation from 1 of `Σ_outcomes ∫ P dU` over `samples` random
    /// inputs of the reactant types `(ra, rb)`, for inputs with at least one
    /// feasible outcome.
    pub fn normalization_defect<R: Rng + ?Sized>(
        &self,
        types: &TypeTable,
        (ra, rb): (TypeId, TypeId),
        samples: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let top = types.energies().iter().cloned().fold(0.0, f64::max) + 1.0;
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let a = (ra, 3.0 * top * rng.random::<f64>());
            let b = (rb, 3.0 * top * rng.random::<f64>());
            let total = self.feasible_weight(types, a, b);
            if total <= 0.0 {
                continue;
            }
            let mut mass = 0.0;
            for o in &self.outcomes {
                let s = available_kinetic(types, a, b, (o.products[0], o.products[1]));
                if s <= 0.0 || o.weight == 0.0 {
                    // degenerate interval: the split is a unit point mass
                    if s == 0.0 {
                        mass += o.weight / total;
                    }
                    continue;
                }
                let z = o.split.normalizer(s)?;
                let m = integral_of_split(&o.split, s, z);
                mass += o.weight / total * m;
            }
            worst = worst.max((mass - 1.0).abs());
        }
        Ok(worst)
    }
}

/// `∫_0^s density(u | s) du`, split at the table's cell edges.
fn integral_of_split(split: &EnergySplit, s: f64, z: f64) -> f64 {
    match split {
        EnergySplit::Uniform => integrate(|u| split.density_with(u, s, z), 0.0, s, 4),
        EnergySplit::Table { values } => {
            let n = values.len();
            (0..n)
                .map(|k| {
                    let (lo, hi) = (s * k as f64 / n as f64, s * (k + 1) as f64 / n as f64);
                    integrate(|u| split.density_with(u, s, z), lo, hi, 1)
                })
                .sum()
        }
        EnergySplit::Canonical { first, second } => {
            let (lo, hi) = joint_support(first, second, s);
            // Beta shapes below one have endpoint singularities; use the CDF.
            if let CanonicalForm::Beta(a, b) = canonical_form(first, second) {
                let (x0, x1) = (lo / s, hi / s);
                return beta_cdf(a, b, x1) - beta_cdf(a, b, x0);
            }
            integrate_clustered(|u| split.density_with(u, s, z), lo, hi, 2 * NORM_PANELS)
        }
    }
}

fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    statrs::function::beta::beta_reg(a, b, x.clamp(0.0, 1.0))
}
