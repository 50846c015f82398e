//! The `simulate`, `solve`, `analyze` and `check` subcommands and their CSV
//! and JSON outputs.
//!
//! Reals are written in the shortest decimal form that parses back to the
//! same `f64`, so identical runs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::entropy::relative_entropy_grid;
use crate::analysis::ks::{ks_critical, ks_distance};
use crate::analysis::report::CheckReport;
use crate::checks::run_checks;
use crate::error::{Error, Result};
use crate::kinetics::TypeId;
use crate::par::Execution;
use crate::scenario::Scenario;
use crate::sim::run_ensemble;
use crate::solver::{integrate, mass, DensityGrid, SolverConfig};

/// Overrides taken from the command line.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub execution: Execution,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One file per snapshot and replica with `type_id,kinetic_energy` rows in
/// canonical particle order, an index `snapshots.csv`, and `histogram.csv`
/// when the scenario asks for histograms.
pub fn simulate(scenario: &Scenario, out: &Path, opts: RunOptions) -> Result<()> {
    let mut config = scenario.simulator_config(opts.seed, opts.replicas)?;
    config.execution = opts.execution;
    let runs = run_ensemble(&config)?;
    create_dir(out)?;
    let mut index = String::from("replica,index,time,events,file\n");
    let mut hist = String::from("replica,time,type_id,bin_lo,bin_hi,density\n");
    for (r, run) in runs.iter().enumerate() {
        for (k, snap) in run.snapshots.iter().enumerate() {
            let name = format!("snapshot_r{r}_{k:04}.csv");
            let mut csv = String::from("type_id,kinetic_energy\n");
            for p in snap.state.canonical() {
                let _ = writeln!(csv, "{},{}", p.type_id, p.kinetic_energy);
            }
            write_file(&out.join(&name), &csv)?;
            let _ = writeln!(index, "{r},{k},{},{},{name}", snap.time, snap.events);
            for (v, h) in snap.histograms.iter().enumerate() {
                for (b, d) in h.iter().enumerate() {
                    let (lo, hi) = (config.histogram_edges[b], config.histogram_edges[b + 1]);
                    let _ = writeln!(hist, "{r},{},{},{lo},{hi},{d}", snap.time, TypeId::from_index(v));
                }
            }
        }
    }
    write_file(&out.join("snapshots.csv"), &index)?;
    if !config.histogram_edges.is_empty() {
        write_file(&out.join("histogram.csv"), &hist)?;
    }
    Ok(())
}

fn grid_csv(grid: &DensityGrid) -> String {
    let mut csv = String::from("type_id,x_center,density\n");
    for (v, row) in grid.values.iter().enumerate() {
        for (k, d) in row.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{d}", TypeId::from_index(v), grid.center(k));
        }
    }
    csv
}

fn solver_run(
    scenario: &Scenario,
    execution: Execution,
    tweak: impl FnOnce(&mut SolverConfig),
) -> Result<Vec<(f64, DensityGrid)>> {
    let mut config = scenario.solver_config()?;
    config.execution = execution;
    tweak(&mut config);
    integrate(&scenario.initial_grid()?, &scenario.network()?, &config)
}

/// `grid_NNNN.csv` per snapshot (`type_id,x_center,density` rows) and an
/// index `grids.csv`.
pub fn solve(scenario: &Scenario, out: &Path, opts: RunOptions) -> Result<()> {
    let trajectory = solver_run(scenario, opts.execution, |_| {})?;
    create_dir(out)?;
    let mut index = String::from("index,time,mass,file\n");
    for (k, (t, grid)) in trajectory.iter().enumerate() {
        let name = format!("grid_{k:04}.csv");
        write_file(&out.join(&name), &grid_csv(grid))?;
        let _ = writeln!(index, "{k},{t},{},{name}", mass(grid));
    }
    write_file(&out.join("grids.csv"), &index)
}

/// Snapshots kept for the entropy curve when the scenario does not set a
/// cadence.
const ENTROPY_POINTS: usize = 100;

/// `entropy.csv` (`H(f(t), f0)` along the solver run) when the scenario has
/// a solver section, and `ks.csv` (KS distance of each simulated snapshot
/// to the reference, per type) when it has a simulation section.
pub fn analyze(scenario: &Scenario, out: &Path, opts: RunOptions) -> Result<()> {
    let f0 = scenario.reference_density()?;
    if scenario.solver.is_none() && scenario.simulation.is_none() {
        return Err(Error::invalid(
            "solver",
            "analyze needs a solver or a simulation section",
        ));
    }
    create_dir(out)?;
    if scenario.solver.is_some() {
        let trajectory = solver_run(scenario, opts.execution, |c| {
            if c.snapshot_every.is_none() {
                let steps = (c.t_end / c.dt).ceil() as usize;
                c.snapshot_every = Some((steps / ENTROPY_POINTS).max(1));
            }
        })?;
        let mut csv = String::from("time,entropy\n");
        for (t, grid) in &trajectory {
            let _ = writeln!(csv, "{t},{}", relative_entropy_grid(grid, &f0)?);
        }
        write_file(&out.join("entropy.csv"), &csv)?;
    }
    if scenario.simulation.is_some() {
        let mut config = scenario.simulator_config(opts.seed, opts.replicas)?;
        config.execution = opts.execution;
        let runs = run_ensemble(&config)?;
        let mut csv = String::from("replica,time,type_id,samples,distance,critical\n");
        for (r, run) in runs.iter().enumerate() {
            for snap in &run.snapshots {
                for (v, family) in f0.families.iter().enumerate() {
                    let id = TypeId::from_index(v);
                    let xs = snap.state.energies_of(id);
                    if xs.is_empty() {
                        continue;
                    }
                    let d = ks_distance(&xs, |x| family.cdf(x))?;
                    let _ = writeln!(csv, "{r},{},{id},{},{d},{}", snap.time, xs.len(), ks_critical(xs.len()));
                }
            }
        }
        write_file(&out.join("ks.csv"), &csv)?;
    }
    Ok(())
}

/// Runs the scenario's checks, writes `report.json` and returns the report.
pub fn check(scenario: &Scenario, out: &Path, opts: RunOptions) -> Result<CheckReport> {
    let mut scenario = scenario.clone();
    if let Some(sim) = &mut scenario.simulation {
        sim.seed = opts.seed.unwrap_or(sim.seed);
        sim.replicas = opts.replicas.unwrap_or(sim.replicas);
    }
    let report = run_checks(&scenario, opts.execution)?;
    create_dir(out)?;
    write_file(&out.join("report.json"), &report.to_json()?)?;
    Ok(report)
}

/// Machine-readable error body for standard error.
pub fn error_json(err: &Error) -> String {
    let mut body = serde_json::json!({
        "error": err.kind(),
        "message": err.to_string(),
    });
    match err {
        Error::Invalid { field, rule } => {
            body["field"] = field.clone().into();
            body["rule"] = rule.clone().into();
        }
        Error::BlowUp { step, time, .. } => {
            body["step"] = (*step).into();
            body["time"] = (*time).into();
        }
        _ => {}
    }
    body.to_string()
}
