//! Numerical checks of equilibrium conditions: entropy, balance residuals,
//! canonical kernels, stationary type laws, cycle criteria and goodness of
//! fit.

pub mod balance;
pub mod canonical;
pub mod entropy;
pub mod kolmogorov;
pub mod ks;
pub mod report;
pub mod stationary;

use crate::density::DensityFamily;
use crate::error::{Error, Result};
use crate::kinetics::TypeId;
use crate::solver::DensityGrid;

/// A point `γ = (v, x)` of the one-particle phase space.
pub type Phase = (TypeId, f64);

/// A nonnegative function `f(v, x)` on types times energies.
pub trait PhaseDensity: Sync {
    fn types(&self) -> usize;
    fn value(&self, v: TypeId, x: f64) -> f64;
}

/// `weight_v · family_v(x)` per type.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesDensity {
    pub weights: Vec<f64>,
    pub families: Vec<DensityFamily>,
}

impl SpeciesDensity {
    pub fn new(weights: Vec<f64>, families: Vec<DensityFamily>) -> Result<Self> {
        if weights.len() != families.len() || weights.is_empty() {
            return Err(Error::invalid("density.weights", "need one weight per type"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("density.weights", "weights must be finite and >= 0"));
        }
        for (k, f) in families.iter().enumerate() {
            f.validate(&format!("density.families[{k}]"))?;
        }
        Ok(SpeciesDensity { weights, families })
    }

    pub fn single(family: DensityFamily) -> Result<Self> {
        SpeciesDensity::new(vec![1.0], vec![family])
    }
}

impl PhaseDensity for SpeciesDensity {
    fn types(&self) -> usize {
        self.families.len()
    }

    fn value(&self, v: TypeId, x: f64) -> f64 {
        self.weights[v.index()] * self.families[v.index()].pdf(x)
    }
}

impl PhaseDensity for DensityGrid {
    fn types(&self) -> usize {
        self.values.len()
    }

    fn value(&self, v: TypeId, x: f64) -> f64 {
        if !(x >= 0.0 && x < self.x_max) {
            return 0.0;
        }
        let k = ((x / self.h()) as usize).min(self.n_cells - 1);
        self.values[v.index()][k]
    }
}

/// Radical inverse of `index` in `base`: the Halton low-discrepancy point.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_points() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert_eq!(halton(3, 2), 0.75);
        assert!((halton(1, 3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn grid_lookup() {
        let g = DensityGrid::from_fn(2.0, 4, 1, |_, x| x).unwrap();
        assert_eq!(g.value(TypeId(1), 0.1), 0.25);
        assert_eq!(g.value(TypeId(1), 1.9), 1.75);
        assert_eq!(g.value(TypeId(1), 2.0), 0.0);
    }
}
