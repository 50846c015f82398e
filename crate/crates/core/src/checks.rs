//! Runs the checks a scenario requests and collects a JSON-ready report.

use crate::analysis::balance::{
    detailed_balance_residual, fixed_point_residual, local_equilibrium_residual, BalanceConfig,
};
use crate::analysis::canonical::exponential_admissibility;
use crate::analysis::entropy::entropy_monotonicity_check;
use crate::analysis::kolmogorov::{kolmogorov_cycle_check, DiscreteChainSpec};
use crate::analysis::ks::ks_distance;
use crate::analysis::report::{CheckReport, CheckResult};
use crate::analysis::SpeciesDensity;
use crate::error::Result;
use crate::kinetics::TypeId;
use crate::network::ReactionNetwork;
use crate::par::Execution;
use crate::scenario::{CheckSpec, Scenario};
use crate::sim::{run_ensemble, Trajectory};
use crate::solver::{integrate, rhs_multitype_with, DensityGrid, RhsOptions};

/// Run every requested check. Module faults abort; failed checks do not.
pub fn run_checks(scenario: &Scenario, execution: Execution) -> Result<CheckReport> {
    let network = scenario.network()?;
    let mut report = CheckReport::default();
    for check in &scenario.checks {
        report.push(run_check(scenario, &network, check, execution)?);
    }
    Ok(report)
}

fn balance_config(samples: usize, energy_scale: f64, execution: Execution) -> BalanceConfig {
    BalanceConfig {
        samples,
        energy_scale,
        execution,
        ..BalanceConfig::default()
    }
}

pub fn run_check(
    scenario: &Scenario,
    network: &ReactionNetwork,
    check: &CheckSpec,
    execution: Execution,
) -> Result<CheckResult> {
    Ok(match *check {
        CheckSpec::DetailedBalance {
            tolerance,
            samples,
            energy_scale,
        } => {
            let f0 = scenario.reference_density()?;
            let r = detailed_balance_residual(network, &f0, &balance_config(samples, energy_scale, execution))?;
            CheckResult::below("detailed_balance", r.max, tolerance, r.samples)
        }
        CheckSpec::LocalEquilibrium {
            tolerance,
            samples,
            energy_scale,
        } => {
            let f0 = scenario.reference_density()?;
            let r = local_equilibrium_residual(network, &f0, &balance_config(samples, energy_scale, execution))?;
            CheckResult::below("local_equilibrium", r.max, tolerance, r.samples)
        }
        CheckSpec::FixedPoint {
            tolerance,
            samples,
            energy_scale,
        } => {
            let f0 = scenario.reference_density()?;
            let r = fixed_point_residual(network, &f0, &balance_config(samples, energy_scale, execution))?;
            CheckResult::below("fixed_point", r.max, tolerance, r.samples)
        }
        CheckSpec::SolverFixedPoint {
            tolerance,
            x_max,
            n_cells,
        } => {
            let grid = reference_grid(&scenario.reference_density()?, x_max, n_cells)?;
            let opts = RhsOptions {
                execution,
                ..RhsOptions::default()
            };
            let rhs = rhs_multitype_with(&grid, network, &opts)?;
            let worst = rhs.iter().flatten().fold(0.0_f64, |m, r| m.max(r.abs()));
            CheckResult::below("solver_fixed_point", worst, tolerance, n_cells * grid.types())
        }
        CheckSpec::EntropyMonotone { tolerance } => {
            let f0 = scenario.reference_density()?;
            let mut config = scenario.solver_config()?;
            config.execution = execution;
            if config.snapshot_every.is_none() {
                config.snapshot_every = Some(1);
            }
            let trajectory = integrate(&scenario.initial_grid()?, network, &config)?;
            let r = entropy_monotonicity_check(&trajectory, &f0, tolerance)?;
            CheckResult {
                name: "entropy_monotone".into(),
                tolerance,
                observed: (-r.min_delta).max(0.0),
                pass: r.pass,
                samples: r.values.len(),
            }
        }
        CheckSpec::Kolmogorov {
            ref rates,
            max_cycle_len,
        } => {
            let r = kolmogorov_cycle_check(&DiscreteChainSpec::new(rates.clone())?, max_cycle_len)?;
            CheckResult {
                name: "kolmogorov".into(),
                tolerance: crate::analysis::kolmogorov::CYCLE_TOLERANCE,
                observed: r.ratio - 1.0,
                pass: r.pass,
                samples: r.cycles,
            }
        }
        CheckSpec::ExponentialAdmissibility { beta, tolerance } => {
            let energies = network.types().energies().to_vec();
            let points: Vec<f64> = (0..1000).map(|k| k as f64 * 20.0 / (1000.0 * beta)).collect();
            let r = exponential_admissibility(beta, &energies, &points)?;
            CheckResult::below("exponential_admissibility", r, tolerance, points.len())
        }
        CheckSpec::SimulationKs { tolerance, ref times } => {
            let f0 = scenario.reference_density()?;
            let mut config = scenario.simulator_config(None, None)?;
            config.execution = execution;
            let runs = run_ensemble(&config)?;
            let (distance, samples) = pooled_ks(&runs, &f0, times)?;
            CheckResult::below("simulation_ks", distance, tolerance, samples)
        }
    })
}

/// Reference density tabulated on cell centers, so the discrete right-hand
/// side is evaluated at the exact point values.
pub fn reference_grid(f0: &SpeciesDensity, x_max: f64, n_cells: usize) -> Result<DensityGrid> {
    DensityGrid::from_fn(x_max, n_cells, f0.families.len(), |v, x| {
        f0.weights[v] * f0.families[v].pdf(x)
    })
}

/// Kinetic energies of type `v` pooled over the snapshots at `times` (all
/// snapshots when empty) of every trajectory.
pub fn pooled_energies(runs: &[Trajectory], v: TypeId, times: &[f64]) -> Vec<f64> {
    runs.iter()
        .flat_map(|t| &t.snapshots)
        .filter(|s| times.is_empty() || times.iter().any(|&t| (t - s.time).abs() <= 1e-12 * t.abs().max(1.0)))
        .flat_map(|s| s.state.energies_of(v))
        .collect()
}

/// Worst per-type KS distance against the reference family of that type,
/// skipping types with no particles; also returns the pooled sample count.
pub fn pooled_ks(runs: &[Trajectory], f0: &SpeciesDensity, times: &[f64]) -> Result<(f64, usize)> {
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for (k, family) in f0.families.iter().enumerate() {
        let xs = pooled_energies(runs, TypeId::from_index(k), times);
        if xs.is_empty() {
            continue;
        }
        samples += xs.len();
        worst = worst.max(ks_distance(&xs, |x| family.cdf(x))?);
    }
    Ok((worst, samples))
}
