//! Relative entropy `H(f, f0) = Σ_v ∫ f log(f0 / f)` and its monotonicity
//! along solver trajectories.

use serde::{Deserialize, Serialize};

use super::PhaseDensity;
use crate::error::{Error, Result};
use crate::kinetics::TypeId;
use crate::solver::DensityGrid;

/// Tolerance on successive decreases of `H` along a trajectory.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-6;

fn cell_term(v: TypeId, x: f64, f: f64, f0: f64) -> Result<f64> {
    if f == 0.0 {
        return Ok(0.0);
    }
    if !(f0 > 0.0) {
        return Err(Error::Undefined(format!(
            "relative entropy: f0 vanishes at type {v}, x = {x} where f = {f}"
        )));
    }
    Ok(f * (f0 / f).ln())
}

/// Midpoint rule on `n_cells` cells of `[0, x_max]`.
pub fn relative_entropy(f: &dyn PhaseDensity, f0: &dyn PhaseDensity, x_max: f64, n_cells: usize) -> Result<f64> {
    if f.types() != f0.types() {
        return Err(Error::invalid("f0", "type count differs from f"));
    }
    let h = x_max / n_cells as f64;
    let mut total = 0.0;
    for v in (0..f.types()).map(TypeId::from_index) {
        for k in 0..n_cells {
            let x = (k as f64 + 0.5) * h;
            total += cell_term(v, x, f.value(v, x), f0.value(v, x))?;
        }
    }
    Ok(total * h)
}

/// `H` of a solver grid against `f0` evaluated at the grid's cell centers.
pub fn relative_entropy_grid(f: &DensityGrid, f0: &dyn PhaseDensity) -> Result<f64> {
    if f.types() != f0.types() {
        return Err(Error::invalid("f0", "type count differs from the grid"));
    }
    let h = f.h();
    let mut total = 0.0;
    for (v, row) in f.values.iter().enumerate() {
        let id = TypeId::from_index(v);
        for (k, &value) in row.iter().enumerate() {
            let x = f.center(k);
            total += cell_term(id, x, value, f0.value(id, x))?;
        }
    }
    Ok(total * h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `(t, H)` per snapshot.
    pub values: Vec<(f64, f64)>,
    /// Smallest successive difference `H_{i+1} - H_i`.
    pub min_delta: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Passes iff `H` never drops by more than `tolerance` between snapshots.
pub fn entropy_monotonicity_check(
    trajectory: &[(f64, DensityGrid)],
    f0: &dyn PhaseDensity,
    tolerance: f64,
) -> Result<MonotonicityReport> {
    let values = trajectory
        .iter()
        .map(|(t, g)| Ok((*t, relative_entropy_grid(g, f0)?)))
        .collect::<Result<Vec<_>>>()?;
    let min_delta = values.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::INFINITY, f64::min);
    Ok(MonotonicityReport {
        pass: values.len() < 2 || min_delta >= -tolerance,
        min_delta,
        tolerance,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::SpeciesDensity;
    use crate::density::DensityFamily;
    use crate::quad::integrate;

    fn exp(rate: f64) -> SpeciesDensity {
        SpeciesDensity::single(DensityFamily::exponential(rate)).unwrap()
    }

    #[test]
    fn identical_densities_have_zero_entropy() {
        assert_eq!(relative_entropy(&exp(1.0), &exp(1.0), 30.0, 1000).unwrap(), 0.0);
    }

    #[test]
    fn exponential_pair_matches_closed_form() {
        let closed = 0.5 - 2f64.ln();
        let oracle = integrate(|x| 2.0 * (-2.0 * x).exp() * (x - 2f64.ln()), 0.0, 40.0, 64);
        assert!((closed - oracle).abs() < 1e-12);
        let h = relative_entropy(&exp(2.0), &exp(1.0), 40.0, 40_000).unwrap();
        assert!((h - closed).abs() < 1e-6, "{h}");
    }

    #[test]
    fn undefined_where_reference_vanishes() {
        let f0 = SpeciesDensity::single(DensityFamily::uniform(0.0, 1.0)).unwrap();
        assert!(matches!(
            relative_entropy(&exp(1.0), &f0, 5.0, 100),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn reversed_trajectory_fails() {
        let f0 = exp(1.0);
        let grids: Vec<(f64, DensityGrid)> = [3.0, 2.0, 1.5, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &rate)| {
                let g =
                    DensityGrid::from_families(30.0, 600, &[Some((1.0, DensityFamily::exponential(rate)))]).unwrap();
                (i as f64, g)
            })
            .collect();
        let forward = entropy_monotonicity_check(&grids, &f0, MONOTONICITY_TOLERANCE).unwrap();
        assert!(forward.pass);
        let mut reversed = grids.clone();
        reversed.reverse();
        let backward = entropy_monotonicity_check(&reversed, &f0, MONOTONICITY_TOLERANCE).unwrap();
        assert!(!backward.pass);
    }
}
