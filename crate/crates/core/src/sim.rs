//! Exact continuous-time simulation of the finite-particle chain.
//!
//! Every unordered pair `{i, j}` collides at rate `α(T_i, T_j) / M`; every
//! particle of type `v` turns into `w` at rate `a_vw`. Events are drawn with
//! the direct method: one exponential holding time for the total rate, then
//! a categorical draw over events. Per-particle row sums
//! `r_i = Σ_{j≠i} α(T_i, T_j)` are cached and updated in `O(M)` after each
//! event, so the total binary rate is `Σ_i r_i / (2M)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::density::DensityFamily;
use crate::error::{Error, Result};
use crate::kinetics::{total_energy, Particle, ParticleSystem, TypeId};
use crate::network::ReactionNetwork;
use crate::par::Execution;

pub use crate::kernel::{sample_canonical_kernel, sample_uniform_kernel};

/// Deterministic generator for replica `replica` of master seed `seed`: the
/// ChaCha8 stream keyed by `seed`, with stream id equal to the replica index.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Collision { i: usize, j: usize },
    Unary { i: usize, to: TypeId },
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesSample {
    pub type_id: TypeId,
    pub count: usize,
    pub density: DensityFamily,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Particles(ParticleSystem),
    /// `count` independent draws from `density` for each listed type.
    Sampled(Vec<SpeciesSample>),
}

impl InitialState {
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> ParticleSystem {
        match self {
            InitialState::Particles(s) => s.clone(),
            InitialState::Sampled(species) => {
                let mut particles = Vec::with_capacity(species.iter().map(|s| s.count).sum());
                for sp in species {
                    for _ in 0..sp.count {
                        particles.push(Particle {
                            type_id: sp.type_id,
                            kinetic_energy: sp.density.sample(rng),
                        });
                    }
                }
                ParticleSystem::new(particles)
            }
        }
    }

    pub fn particle_count(&self) -> usize {
        match self {
            InitialState::Particles(s) => s.len(),
            InitialState::Sampled(species) => species.iter().map(|s| s.count).sum(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimulatorConfig {
    pub network: ReactionNetwork,
    pub initial: InitialState,
    pub t_end: f64,
    /// Sorted times in `[0, t_end]`; the state recorded at `t` is the state
    /// after the last event at or before `t`.
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    pub replicas: usize,
    /// Stop after this many events even if `t_end` is not reached.
    pub max_events: Option<u64>,
    /// Bin edges for per-snapshot histograms; empty disables them.
    pub histogram_edges: Vec<f64>,
    /// Rescale kinetic energies back to the initial total every this many
    /// events. Off by default.
    pub renormalize_every: Option<u64>,
    pub execution: Execution,
}

impl SimulatorConfig {
    pub fn new(network: ReactionNetwork, initial: InitialState, t_end: f64) -> Self {
        SimulatorConfig {
            network,
            initial,
            t_end,
            snapshot_times: vec![t_end],
            seed: 0,
            replicas: 1,
            max_events: None,
            histogram_edges: Vec::new(),
            renormalize_every: None,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0) {
            return Err(Error::invalid("simulation.t_end", "must be >= 0"));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("simulation.replicas", "must be >= 1"));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("simulation.snapshots", "times must be sorted"));
        }
        if self.snapshot_times.iter().any(|&t| !(t >= 0.0 && t <= self.t_end)) {
            return Err(Error::invalid("simulation.snapshots", "times must lie in [0, t_end]"));
        }
        if !self.histogram_edges.is_empty() {
            check_edges(&self.histogram_edges)?;
        }
        if self.initial.particle_count() == 0 {
            return Err(Error::invalid("initial", "at least one particle is required"));
        }
        if let InitialState::Particles(s) = &self.initial {
            s.validate(self.network.types())?;
        }
        if let InitialState::Sampled(species) = &self.initial {
            for (k, sp) in species.iter().enumerate() {
                self.network
                    .types()
                    .check(sp.type_id, &format!("initial.species[{k}].type_id"))?;
                sp.density.validate(&format!("initial.species[{k}].density"))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    /// Per-type counts `n_v`.
    pub counts: Vec<usize>,
    /// Events fired up to this snapshot.
    pub events: u64,
    /// Per-type histograms over `histogram_edges`, see [`empirical_histogram`].
    pub histograms: Vec<Vec<f64>>,
    pub state: ParticleSystem,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub final_state: ParticleSystem,
    /// Events fired, including collisions with no feasible outcome.
    pub events: u64,
    /// Collisions with no feasible outcome ("nothing occurs").
    pub noops: u64,
    pub initial_energy: f64,
}

/// Cached simulator state for one trajectory.
pub struct Simulator<'a> {
    net: &'a ReactionNetwork,
    state: ParticleSystem,
    rows: Vec<f64>,
    unary: Vec<f64>,
    pair_sum: f64,
    unary_sum: f64,
    /// All binary rates are constants, so rows depend on types only.
    type_only_rates: bool,
    since_refresh: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(net: &'a ReactionNetwork, state: ParticleSystem) -> Result<Self> {
        state.validate(net.types())?;
        let type_only_rates = net.binary_channels().iter().all(|c| c.rate.constant_value().is_some());
        let mut sim = Simulator {
            net,
            state,
            rows: Vec::new(),
            unary: Vec::new(),
            pair_sum: 0.0,
            unary_sum: 0.0,
            type_only_rates,
            since_refresh: 0,
        };
        sim.refresh()?;
        Ok(sim)
    }

    pub fn state(&self) -> &ParticleSystem {
        &self.state
    }

    pub fn into_state(self) -> ParticleSystem {
        self.state
    }

    #[inline]
    fn alpha(&self, a: &Particle, b: &Particle) -> f64 {
        self.net
            .binary_rate(a.type_id, a.kinetic_energy, b.type_id, b.kinetic_energy)
    }

    fn alpha_checked(&self, a: &Particle, b: &Particle) -> Result<f64> {
        let r = self.alpha(a, b);
        if r >= 0.0 && r.is_finite() {
            Ok(r)
        } else {
            Err(Error::NegativeRate {
                rate: r,
                source_desc: format!(
                    "α_{{{}{}}}({}, {})",
                    a.type_id, b.type_id, a.kinetic_energy, b.kinetic_energy
                ),
            })
        }
    }

    fn row(&self, i: usize) -> Result<f64> {
        let p = &self.state.particles[i];
        let mut sum = 0.0;
        for (k, q) in self.state.particles.iter().enumerate() {
            if k != i {
                sum += self.alpha_checked(p, q)?;
            }
        }
        Ok(sum)
    }

    fn unary_rate(&self, i: usize) -> Result<f64> {
        let p = &self.state.particles[i];
        let r = self.net.unary_total(p.type_id, p.kinetic_energy);
        if r >= 0.0 && r.is_finite() {
            Ok(r)
        } else {
            Err(Error::NegativeRate {
                rate: r,
                source_desc: format!("unary rates of type {}", p.type_id),
            })
        }
    }

    /// Recompute every cached rate from scratch.
    pub fn refresh(&mut self) -> Result<()> {
        let m = self.state.len();
        self.rows = if self.net.has_binary() {
            (0..m).map(|i| self.row(i)).collect::<Result<_>>()?
        } else {
            vec![0.0; m]
        };
        self.unary = (0..m).map(|i| self.unary_rate(i)).collect::<Result<_>>()?;
        self.resum();
        self.since_refresh = 0;
        Ok(())
    }

    fn resum(&mut self) {
        self.pair_sum = 0.5 * self.rows.iter().sum::<f64>();
        self.unary_sum = self.unary.iter().sum();
    }

    /// Total event rate `Λ = Σ_{i<j} α_ij / M + Σ_i u_i`.
    pub fn total_rate(&self) -> f64 {
        let m = self.state.len();
        let binary = if m >= 2 { self.pair_sum.max(0.0) / m as f64 } else { 0.0 };
        binary + self.unary_sum.max(0.0)
    }

    /// Draw the holding time and the next event. `(∞, Event::None)` when the
    /// total rate vanishes.
    pub fn next_event<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, Event)> {
        let m = self.state.len();
        let binary = if m >= 2 { self.pair_sum.max(0.0) / m as f64 } else { 0.0 };
        let total = binary + self.unary_sum.max(0.0);
        if !(total > 0.0) {
            return Ok((f64::INFINITY, Event::None));
        }
        let wait = -(1.0 - rng.random::<f64>()).ln() / total;
        let event = if rng.random::<f64>() * total < binary {
            let i = pick(&self.rows, rng);
            let p = self.state.particles[i];
            let weights: Vec<f64> = self
                .state
                .particles
                .iter()
                .enumerate()
                .map(|(k, q)| if k == i { 0.0 } else { self.alpha(&p, q) })
                .collect();
            let j = pick(&weights, rng);
            Event::Collision { i, j }
        } else {
            let i = pick(&self.unary, rng);
            let p = self.state.particles[i];
            let full = self.net.types().energy(p.type_id) + p.kinetic_energy;
            let channels: Vec<_> = self.net.unary_from(p.type_id).collect();
            let weights: Vec<f64> = channels
                .iter()
                .map(|ch| ch.rate.eval(full, self.net.types().energy(ch.to)))
                .collect();
            Event::Unary {
                i,
                to: channels[pick(&weights, rng)].to,
            }
        };
        Ok((wait, event))
    }

    /// Apply an event. Returns `false` for a collision with no feasible
    /// outcome, which leaves the state untouched.
    pub fn apply<R: Rng + ?Sized>(&mut self, event: Event, rng: &mut R) -> Result<bool> {
        let (changed, fired) = match event {
            Event::None => return Ok(false),
            Event::Collision { i, j } => {
                let (pi, pj) = (self.state.particles[i], self.state.particles[j]);
                let (ch, forward) = self.net.channel(pi.type_id, pj.type_id).ok_or_else(|| {
                    Error::Undefined(format!("no channel for types ({}, {})", pi.type_id, pj.type_id))
                })?;
                let (first, second) = if forward { (i, j) } else { (j, i) };
                let (a, b) = (self.state.particles[first], self.state.particles[second]);
                let outcome = ch.kernel.choose(
                    self.net.types(),
                    (a.type_id, a.kinetic_energy),
                    (b.type_id, b.kinetic_energy),
                    rng,
                )?;
                let Some(outcome) = outcome else {
                    return Ok(false);
                };
                let before = [pi, pj];
                self.state.collide(first, second, outcome, self.net.types())?;
                ([i, j], Some(before))
            }
            Event::Unary { i, to } => {
                let before = self.state.particles[i];
                self.state.transform(i, to, self.net.types())?;
                ([i, i], Some([before, before]))
            }
        };
        if let Some(before) = fired {
            self.update(changed, before)?;
        }
        Ok(true)
    }

    fn update(&mut self, changed: [usize; 2], before: [Particle; 2]) -> Result<()> {
        let m = self.state.len();
        self.since_refresh += 1;
        if self.since_refresh >= m.max(64) {
            return self.refresh();
        }
        let distinct = changed[0] != changed[1];
        if self.net.has_binary() {
            let types_kept = before[0].type_id == self.state.particles[changed[0]].type_id
                && before[1].type_id == self.state.particles[changed[1]].type_id;
            if !(self.type_only_rates && types_kept) {
                let after = [self.state.particles[changed[0]], self.state.particles[changed[1]]];
                for k in 0..m {
                    if k == changed[0] || k == changed[1] {
                        continue;
                    }
                    let q = self.state.particles[k];
                    let mut delta = self.alpha_checked(&q, &after[0])? - self.alpha(&q, &before[0]);
                    if distinct {
                        delta += self.alpha_checked(&q, &after[1])? - self.alpha(&q, &before[1]);
                    }
                    self.rows[k] = (self.rows[k] + delta).max(0.0);
                }
                self.rows[changed[0]] = self.row(changed[0])?;
                if distinct {
                    self.rows[changed[1]] = self.row(changed[1])?;
                }
            }
        }
        self.unary[changed[0]] = self.unary_rate(changed[0])?;
        if distinct {
            self.unary[changed[1]] = self.unary_rate(changed[1])?;
        }
        self.resum();
        Ok(())
    }
}

/// Categorical draw proportional to `weights`.
fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return k;
        }
    }
    // rounding pushed the target past the last bucket
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// One draw of `(holding time, event)` from `state`, computing every rate
/// from scratch.
pub fn sample_next_event<R: Rng + ?Sized>(
    state: &ParticleSystem,
    network: &ReactionNetwork,
    rng: &mut R,
) -> Result<(f64, Event)> {
    if state.is_empty() {
        return Err(Error::invalid("state", "at least one particle is required"));
    }
    Simulator::new(network, state.clone())?.next_event(rng)
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::invalid("histogram.edges", "need at least two edges (one bin)"));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("histogram.edges", "edges must be strictly increasing"));
    }
    Ok(())
}

/// Histogram of the kinetic energies of type `v`, normalized by the total
/// particle count `M` and the bin width, so that the masses of all types
/// sum to one when the bins cover every particle.
pub fn empirical_histogram(state: &ParticleSystem, v: TypeId, edges: &[f64]) -> Result<Vec<f64>> {
    check_edges(edges)?;
    let m = state.len() as f64;
    let mut counts = vec![0usize; edges.len() - 1];
    for p in state.particles.iter().filter(|p| p.type_id == v) {
        let x = p.kinetic_energy;
        if x < edges[0] || x > edges[edges.len() - 1] {
            continue;
        }
        // bins are [e_k, e_{k+1}); the last bin also holds its right edge
        let k = edges
            .partition_point(|&e| e <= x)
            .saturating_sub(1)
            .min(counts.len() - 1);
        counts[k] += 1;
    }
    Ok(counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| c as f64 / (m * (w[1] - w[0])))
        .collect())
}

fn snapshot(state: &ParticleSystem, time: f64, events: u64, config: &SimulatorConfig) -> Snapshot {
    let types = config.network.types();
    let histograms = if config.histogram_edges.is_empty() {
        Vec::new()
    } else {
        types
            .ids()
            .map(|v| empirical_histogram(state, v, &config.histogram_edges).expect("validated edges"))
            .collect()
    };
    let mut state = state.clone();
    state.time = time;
    Snapshot {
        time,
        counts: state.counts(types),
        events,
        histograms,
        state,
    }
}

/// Run replica `replica` of `config`.
pub fn run_replica(config: &SimulatorConfig, replica: usize) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = replica_rng(config.seed, replica as u64);
    let initial = config.initial.realize(&mut rng);
    let types = config.network.types();
    let initial_energy = total_energy(&initial, types)?;
    let mut sim = Simulator::new(&config.network, initial)?;
    let mut snapshots = Vec::with_capacity(config.snapshot_times.len());
    let mut next_snap = 0;
    let (mut t, mut events, mut noops) = (0.0_f64, 0_u64, 0_u64);
    let mut stopped_by_count = false;
    loop {
        if config.max_events.is_some_and(|max| events >= max) {
            stopped_by_count = true;
            break;
        }
        let (wait, event) = sim.next_event(&mut rng).map_err(|e| Error::Event {
            time: t,
            event: events,
            source: Box::new(e),
        })?;
        let t_next = t + wait;
        while next_snap < config.snapshot_times.len() && config.snapshot_times[next_snap] < t_next {
            snapshots.push(snapshot(sim.state(), config.snapshot_times[next_snap], events, config));
            next_snap += 1;
        }
        if t_next > config.t_end || event == Event::None {
            break;
        }
        let fired = sim.apply(event, &mut rng).map_err(|e| Error::Event {
            time: t_next,
            event: events,
            source: Box::new(e),
        })?;
        t = t_next;
        events += 1;
        noops += u64::from(!fired);
        if let Some(every) = config.renormalize_every.filter(|&k| k > 0) {
            if events % every == 0 {
                sim.state.renormalize_energy(initial_energy, types);
                sim.refresh()?;
            }
        }
    }
    let mut final_state = sim.into_state();
    final_state.time = if stopped_by_count { t } else { config.t_end };
    Ok(Trajectory {
        snapshots,
        final_state,
        events,
        noops,
        initial_energy,
    })
}

/// Replica 0 of `config`.
pub fn run(config: &SimulatorConfig) -> Result<Trajectory> {
    run_replica(config, 0)
}

/// Independent replicas, one ChaCha stream each, returned in replica order.
pub fn run_ensemble(config: &SimulatorConfig) -> Result<Vec<Trajectory>> {
    config.validate()?;
    config
        .execution
        .map_range(config.replicas, |r| run_replica(config, r))
        .into_iter()
        .collect()
}
