//! Versioned JSON scenarios: type table, reaction network, initial condition,
//! run parameters and requested checks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::SpeciesDensity;
use crate::density::DensityFamily;
use crate::error::{Error, Result};
use crate::kernel::{KernelOutcome, ScatteringKernel};
use crate::kinetics::{Particle, ParticleSystem, TypeId, TypeTable};
use crate::network::{BinaryChannel, ReactionNetwork, UnaryChannel};
use crate::rates::{BinaryRate, UnaryRate};
use crate::sim::{InitialState, SimulatorConfig, SpeciesSample};
use crate::solver::{DensityGrid, SolverConfig};

pub const SCHEMA: &str = "enerkin/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub types: Vec<TypeSpec>,
    #[serde(default)]
    pub binary_channels: Vec<BinaryChannelSpec>,
    #[serde(default)]
    pub unary_channels: Vec<UnaryChannelSpec>,
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
    /// Reference density `f0`, one entry per type, for entropy, balance and
    /// goodness-of-fit checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<ReferenceSpec>>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSpec {
    #[serde(default)]
    pub internal_energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryChannelSpec {
    pub reactants: [TypeId; 2],
    pub rate: BinaryRate,
    pub kernel: KernelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// Type-preserving, products split `S` uniformly.
    Uniform,
    /// Type-preserving canonical kernel of two densities.
    Canonical {
        first: DensityFamily,
        second: DensityFamily,
    },
    /// Explicit weighted outcomes.
    Outcomes { outcomes: Vec<KernelOutcome> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnaryChannelSpec {
    pub from: TypeId,
    pub to: TypeId,
    pub rate: UnaryRate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Particles {
        particles: Vec<Particle>,
    },
    Sampled {
        species: Vec<SampledSpecies>,
    },
    Grid {
        x_max: f64,
        n_cells: usize,
        species: Vec<GridSpecies>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledSpecies {
    pub type_id: TypeId,
    pub count: usize,
    pub density: DensityFamily,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpecies {
    pub type_id: TypeId,
    #[serde(default = "one")]
    pub weight: f64,
    pub density: DensityFamily,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    #[serde(default = "one")]
    pub weight: f64,
    pub density: DensityFamily,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub t_end: f64,
    /// Snapshot times; defaults to `[t_end]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renormalize_every: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl HistogramSpec {
    pub fn edges(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.bins as f64;
        (0..=self.bins).map(|k| self.lo + k as f64 * w).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    /// Energy grid for sampled starts; `x_max` defaults to twenty times the
    /// initial mean kinetic energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cells: Option<usize>,
    #[serde(flatten)]
    pub config: SolverConfig,
}

/// Balance checks draw `samples` points with energies in `[0, energy_scale]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    DetailedBalance {
        #[serde(default = "tol_closed_form")]
        tolerance: f64,
        #[serde(default = "samples_db")]
        samples: usize,
        #[serde(default = "energy_scale")]
        energy_scale: f64,
    },
    LocalEquilibrium {
        #[serde(default = "tol_quadrature")]
        tolerance: f64,
        #[serde(default = "samples_le")]
        samples: usize,
        #[serde(default = "energy_scale")]
        energy_scale: f64,
    },
    FixedPoint {
        #[serde(default = "tol_quadrature")]
        tolerance: f64,
        #[serde(default = "samples_fp")]
        samples: usize,
        #[serde(default = "energy_scale")]
        energy_scale: f64,
    },
    /// Max-norm of the discretized right-hand side at the reference density.
    SolverFixedPoint {
        #[serde(default = "tol_grid")]
        tolerance: f64,
        x_max: f64,
        n_cells: usize,
    },
    /// Runs the solver and checks that `H(f(t), f0)` never decreases.
    EntropyMonotone {
        #[serde(default = "tol_entropy")]
        tolerance: f64,
    },
    Kolmogorov {
        rates: Vec<Vec<f64>>,
        #[serde(default = "max_cycle_len")]
        max_cycle_len: usize,
    },
    /// Admissibility residual of `β e^{-βx}` across the type table's gaps.
    ExponentialAdmissibility {
        beta: f64,
        #[serde(default = "tol_closed_form")]
        tolerance: f64,
    },
    /// Runs the simulation and compares pooled per-type energies against the
    /// reference with a KS distance. `times` selects snapshots; default all.
    SimulationKs {
        tolerance: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        times: Vec<f64>,
    },
}

fn tol_closed_form() -> f64 {
    1e-12
}
fn tol_quadrature() -> f64 {
    1e-8
}
fn tol_grid() -> f64 {
    1e-3
}
fn tol_entropy() -> f64 {
    crate::analysis::entropy::MONOTONICITY_TOLERANCE
}
fn samples_db() -> usize {
    1000
}
fn samples_le() -> usize {
    200
}
fn samples_fp() -> usize {
    40
}
fn energy_scale() -> f64 {
    10.0
}
fn max_cycle_len() -> usize {
    crate::analysis::kolmogorov::DEFAULT_MAX_CYCLE_LEN
}

/// Read, parse and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Parse and validate scenario JSON; `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|source| Error::Parse {
        path: origin.to_string(),
        source,
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Parse {
            path: "scenario".into(),
            source,
        })
    }

    /// Every module-level precondition, each failure naming its field.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::invalid(
                "schema",
                format!("expected \"{SCHEMA}\", got \"{}\"", self.schema),
            ));
        }
        let network = self.network()?;
        self.validate_initial(network.types())?;
        if let Some(sim) = &self.simulation {
            if matches!(self.initial, InitialSpec::Grid { .. }) {
                return Err(Error::invalid(
                    "simulation",
                    "needs a particle or sampled initial condition",
                ));
            }
            self.simulator_config_with(network.clone(), sim)?.validate()?;
        }
        if let Some(solver) = &self.solver {
            prefix("solver", solver.config.validate())?;
            self.initial_grid()?;
        }
        if self.reference.is_some() {
            self.reference_density()?;
        }
        for (k, check) in self.checks.iter().enumerate() {
            self.validate_check(k, check)?;
        }
        Ok(())
    }

    fn validate_initial(&self, types: &TypeTable) -> Result<()> {
        match &self.initial {
            InitialSpec::Particles { particles } => {
                if particles.is_empty() {
                    return Err(Error::invalid("initial.particles", "at least one particle is required"));
                }
                for (k, p) in particles.iter().enumerate() {
                    types.check(p.type_id, &format!("initial.particles[{k}].type_id"))?;
                    if !(p.kinetic_energy >= 0.0 && p.kinetic_energy.is_finite()) {
                        return Err(Error::invalid(
                            format!("initial.particles[{k}].kinetic_energy"),
                            "must be finite and >= 0",
                        ));
                    }
                }
            }
            InitialSpec::Sampled { species } => {
                if species.iter().map(|s| s.count).sum::<usize>() == 0 {
                    return Err(Error::invalid("initial.species", "at least one particle is required"));
                }
                for (k, s) in species.iter().enumerate() {
                    types.check(s.type_id, &format!("initial.species[{k}].type_id"))?;
                    s.density.validate(&format!("initial.species[{k}].density"))?;
                }
            }
            InitialSpec::Grid { species, .. } => {
                for (k, s) in species.iter().enumerate() {
                    types.check(s.type_id, &format!("initial.species[{k}].type_id"))?;
                    if !(s.weight >= 0.0 && s.weight.is_finite()) {
                        return Err(Error::invalid(
                            format!("initial.species[{k}].weight"),
                            "must be finite and >= 0",
                        ));
                    }
                    s.density.validate(&format!("initial.species[{k}].density"))?;
                }
                self.initial_grid()?;
            }
        }
        Ok(())
    }

    fn validate_check(&self, k: usize, check: &CheckSpec) -> Result<()> {
        let field = format!("checks[{k}]");
        let needs_reference = matches!(
            check,
            CheckSpec::DetailedBalance { .. }
                | CheckSpec::LocalEquilibrium { .. }
                | CheckSpec::FixedPoint { .. }
                | CheckSpec::SolverFixedPoint { .. }
                | CheckSpec::EntropyMonotone { .. }
                | CheckSpec::SimulationKs { .. }
        );
        if needs_reference && self.reference.is_none() {
            return Err(Error::invalid(field, "this check needs a reference density"));
        }
        match check {
            CheckSpec::EntropyMonotone { .. } if self.solver.is_none() => {
                Err(Error::invalid(field, "entropy_monotone needs a solver section"))
            }
            CheckSpec::SimulationKs { .. } if self.simulation.is_none() => {
                Err(Error::invalid(field, "simulation_ks needs a simulation section"))
            }
            CheckSpec::SolverFixedPoint { x_max, n_cells, .. } if !(*x_max > 0.0) || *n_cells == 0 => {
                Err(Error::invalid(field, "grid needs x_max > 0 and n_cells >= 1"))
            }
            CheckSpec::Kolmogorov { rates, .. } => prefix(
                &field,
                crate::analysis::kolmogorov::DiscreteChainSpec::new(rates.clone()).map(|_| ()),
            ),
            CheckSpec::ExponentialAdmissibility { beta, .. } if !(*beta > 0.0) => {
                Err(Error::invalid(format!("{field}.beta"), "must be > 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn type_table(&self) -> Result<TypeTable> {
        TypeTable::with_labels(
            self.types.iter().map(|t| t.internal_energy).collect(),
            self.types.iter().map(|t| t.label.clone()).collect(),
        )
    }

    /// Build the validated reaction network.
    pub fn network(&self) -> Result<ReactionNetwork> {
        let binary = self
            .binary_channels
            .iter()
            .map(|ch| {
                let [a, b] = ch.reactants;
                let kernel = match &ch.kernel {
                    KernelSpec::Uniform => ScatteringKernel::uniform(a, b),
                    KernelSpec::Canonical { first, second } => {
                        ScatteringKernel::canonical(a, b, first.clone(), second.clone())
                    }
                    KernelSpec::Outcomes { outcomes } => ScatteringKernel {
                        outcomes: outcomes.clone(),
                    },
                };
                BinaryChannel {
                    reactants: (a, b),
                    rate: ch.rate.clone(),
                    kernel,
                }
            })
            .collect();
        let unary = self
            .unary_channels
            .iter()
            .map(|ch| UnaryChannel {
                from: ch.from,
                to: ch.to,
                rate: ch.rate.clone(),
            })
            .collect();
        ReactionNetwork::new(self.type_table()?, binary, unary)
    }

    /// Simulator configuration with optional seed and replica overrides.
    pub fn simulator_config(&self, seed: Option<u64>, replicas: Option<usize>) -> Result<SimulatorConfig> {
        let sim = self
            .simulation
            .as_ref()
            .ok_or_else(|| Error::invalid("simulation", "scenario has no simulation section"))?;
        let mut config = self.simulator_config_with(self.network()?, sim)?;
        if let Some(seed) = seed {
            config.seed = seed;
        }
        if let Some(r) = replicas {
            config.replicas = r;
        }
        config.validate()?;
        Ok(config)
    }

    fn simulator_config_with(&self, network: ReactionNetwork, sim: &SimulationSpec) -> Result<SimulatorConfig> {
        let initial = match &self.initial {
            InitialSpec::Particles { particles } => InitialState::Particles(ParticleSystem::new(particles.clone())),
            InitialSpec::Sampled { species } => InitialState::Sampled(
                species
                    .iter()
                    .map(|s| SpeciesSample {
                        type_id: s.type_id,
                        count: s.count,
                        density: s.density.clone(),
                    })
                    .collect(),
            ),
            InitialSpec::Grid { .. } => {
                return Err(Error::invalid(
                    "initial",
                    "simulation needs particles or sampled species",
                ))
            }
        };
        if let Some(hist) = &sim.histogram {
            if hist.bins == 0 || !(hist.hi > hist.lo) {
                return Err(Error::invalid("simulation.histogram", "need bins >= 1 and hi > lo"));
            }
        }
        let mut config = SimulatorConfig::new(network, initial, sim.t_end);
        if !sim.snapshots.is_empty() {
            config.snapshot_times = sim.snapshots.clone();
        }
        config.seed = sim.seed;
        config.replicas = sim.replicas;
        config.max_events = sim.max_events;
        config.histogram_edges = sim.histogram.map(|h| h.edges()).unwrap_or_default();
        config.renormalize_every = sim.renormalize_every;
        Ok(config)
    }

    /// Initial solver grid. Sampled species are weighted by their share of
    /// the particle count, so the total mass is one.
    pub fn initial_grid(&self) -> Result<DensityGrid> {
        let v = self.types.len();
        let mut slots: Vec<Option<(f64, DensityFamily)>> = vec![None; v];
        let (x_max, n_cells) = match &self.initial {
            InitialSpec::Grid {
                x_max,
                n_cells,
                species,
            } => {
                for s in species {
                    add_slot(&mut slots, s.type_id, s.weight, &s.density)?;
                }
                (*x_max, *n_cells)
            }
            InitialSpec::Sampled { species } => {
                let total = species.iter().map(|s| s.count).sum::<usize>() as f64;
                for s in species {
                    add_slot(&mut slots, s.type_id, s.count as f64 / total, &s.density)?;
                }
                let mean: f64 = species.iter().map(|s| s.count as f64 / total * s.density.mean()).sum();
                self.solver_grid_size(mean)?
            }
            InitialSpec::Particles { .. } => {
                return Err(Error::invalid("initial", "the solver needs sampled species or a grid"))
            }
        };
        prefix("initial", DensityGrid::from_families(x_max, n_cells, &slots))
    }

    /// Grid for a sampled start; `x_max` defaults to `20 / β̂` with `β̂` the
    /// reciprocal of the initial mean kinetic energy.
    fn solver_grid_size(&self, mean_energy: f64) -> Result<(f64, usize)> {
        let s = self
            .solver
            .as_ref()
            .ok_or_else(|| Error::invalid("solver", "scenario has no solver section"))?;
        let n = s
            .n_cells
            .ok_or_else(|| Error::invalid("solver.n_cells", "n_cells is required for sampled initial conditions"))?;
        let x = match s.x_max {
            Some(x) => x,
            None if mean_energy > 0.0 && mean_energy.is_finite() => 20.0 * mean_energy,
            None => {
                return Err(Error::invalid(
                    "solver.x_max",
                    "cannot default x_max: the initial mean energy is not positive",
                ))
            }
        };
        Ok((x, n))
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let s = self
            .solver
            .as_ref()
            .ok_or_else(|| Error::invalid("solver", "scenario has no solver section"))?;
        Ok(s.config.clone())
    }

    pub fn reference_density(&self) -> Result<SpeciesDensity> {
        let r = self
            .reference
            .as_ref()
            .ok_or_else(|| Error::invalid("reference", "scenario has no reference density"))?;
        if r.len() != self.types.len() {
            return Err(Error::invalid("reference", "need one entry per type"));
        }
        prefix(
            "reference",
            SpeciesDensity::new(
                r.iter().map(|s| s.weight).collect(),
                r.iter().map(|s| s.density.clone()).collect(),
            ),
        )
    }
}

fn add_slot(slots: &mut [Option<(f64, DensityFamily)>], v: TypeId, weight: f64, density: &DensityFamily) -> Result<()> {
    let slot = slots
        .get_mut(v.index())
        .ok_or_else(|| Error::invalid("initial.species", format!("unknown type {v}")))?;
    if slot.is_some() {
        return Err(Error::invalid("initial.species", format!("type {v} listed twice")));
    }
    *slot = Some((weight, density.clone()));
    Ok(())
}

/// Prefix the field of an `Invalid` error with `scope`.
fn prefix<T>(scope: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Invalid { field, rule } if !field.starts_with(scope) => Error::Invalid {
            field: format!("{scope}.{field}"),
            rule,
        },
        other => other,
    })
}
