use enerkin::analysis::ks::{ks_critical, ks_distance};
use enerkin::density::DensityFamily;
use enerkin::kernel::ScatteringKernel;
use enerkin::kinetics::total_energy;
use enerkin::network::{BinaryChannel, UnaryChannel};
use enerkin::rates::{BinaryRate, UnaryRate};
use enerkin::sim::{
    empirical_histogram, replica_rng, run, run_ensemble, sample_canonical_kernel, sample_next_event,
    sample_uniform_kernel, Event, InitialState, SimulatorConfig, SpeciesSample,
};
use enerkin::{Execution, Particle, ParticleSystem, ReactionNetwork, TypeId, TypeTable};
use rand::Rng;

fn one_type_sampled(m: usize, density: DensityFamily, t_end: f64) -> SimulatorConfig {
    SimulatorConfig::new(
        ReactionNetwork::one_type_uniform(1.0).unwrap(),
        InitialState::Sampled(vec![SpeciesSample {
            type_id: TypeId(1),
            count: m,
            density,
        }]),
        t_end,
    )
}

#[test]
fn pair_selection_follows_heterogeneous_rates() {
    // α(T, T') = 1 + T + T' makes the three pairs unequal
    let net = ReactionNetwork::new(
        TypeTable::single(),
        vec![BinaryChannel {
            reactants: (TypeId(1), TypeId(1)),
            rate: BinaryRate::Affine {
                base: 1.0,
                first: 1.0,
                second: 1.0,
                cap: 100.0,
            },
            kernel: ScatteringKernel::uniform(TypeId(1), TypeId(1)),
        }],
        vec![],
    )
    .unwrap();
    let state = ParticleSystem::new(vec![
        Particle::new(1, 0.5),
        Particle::new(1, 2.0),
        Particle::new(1, 4.0),
    ]);
    let e: Vec<f64> = state.particles.iter().map(|p| p.kinetic_energy).collect();
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let rates: Vec<f64> = pairs.iter().map(|&(i, j)| 1.0 + e[i] + e[j]).collect();
    let total: f64 = rates.iter().sum();
    let mut counts = [0usize; 3];
    let mut rng = replica_rng(21, 0);
    let draws = 100_000;
    let mut wait_sum = 0.0;
    for _ in 0..draws {
        let (wait, event) = sample_next_event(&state, &net, &mut rng).unwrap();
        wait_sum += wait;
        let Event::Collision { i, j } = event else {
            panic!("{event:?}")
        };
        let key = (i.min(j), i.max(j));
        counts[pairs.iter().position(|&p| p == key).unwrap()] += 1;
    }
    for k in 0..3 {
        let p = rates[k] / total;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (counts[k] as f64 - draws as f64 * p).abs() < 3.0 * sigma,
            "{counts:?} vs {rates:?}"
        );
    }
    // total rate is (1/M) Σ_{i<j} α
    let mean_wait = wait_sum / draws as f64;
    let expected = 3.0 / total;
    assert!((mean_wait - expected).abs() < 4.0 * expected / (draws as f64).sqrt());
}

#[test]
fn uniform_kernel_samples() {
    let mut rng = replica_rng(22, 0);
    assert_eq!(sample_uniform_kernel(0.0, 0.0, &mut rng), 0.0);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| sample_uniform_kernel(0.7, 1.3, &mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.01);
    assert!(ks_distance(&xs, |x| (x / 2.0).clamp(0.0, 1.0)).unwrap() < ks_critical(n));
}

#[test]
fn canonical_gamma_kernel_matches_rejection_oracle() {
    let (a, b) = (2.0, 3.0);
    let (ga, gb) = (DensityFamily::gamma(a, 1.5), DensityFamily::gamma(b, 1.5));
    let total = 2.5;
    let mut rng = replica_rng(23, 0);
    let n = 20_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| sample_canonical_kernel(&ga, &gb, total, &mut rng).unwrap().0 / total)
        .collect();
    // oracle: rejection from the joint density x^(a-1) (1-x)^(b-1), bounded by its mode value
    let mode = (a - 1.0) / (a + b - 2.0);
    let bound = mode.powf(a - 1.0) * (1.0 - mode).powf(b - 1.0);
    let mut oracle = Vec::with_capacity(n);
    let mut orng = replica_rng(24, 0);
    while oracle.len() < n {
        let x: f64 = orng.random();
        if orng.random::<f64>() * bound <= x.powf(a - 1.0) * (1.0 - x).powf(b - 1.0) {
            oracle.push(x);
        }
    }
    let moments = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
        (m, var)
    };
    let ((m1, v1), (m2, v2)) = (moments(&xs), moments(&oracle));
    assert!((m1 - m2).abs() < 0.006, "{m1} {m2}");
    assert!((v1 - v2).abs() < 0.003, "{v1} {v2}");
    assert!((m1 - a / (a + b)).abs() < 0.005);
    assert!(sample_canonical_kernel(&DensityFamily::uniform(2.0, 3.0), &ga, 1.0, &mut rng).is_err());
}

#[test]
fn seeds_determine_trajectories() {
    let mut config = one_type_sampled(200, DensityFamily::exponential(1.0), 3.0);
    config.snapshot_times = vec![0.0, 1.5, 3.0];
    config.replicas = 4;
    config.seed = 99;
    let a = run_ensemble(&config).unwrap();
    let b = run_ensemble(&config).unwrap();
    assert_eq!(a, b);
    config.execution = Execution::Sequential;
    assert_eq!(run_ensemble(&config).unwrap(), a);
    assert_eq!(run(&config).unwrap(), a[0]);
    assert_ne!(a[0].final_state, a[1].final_state);
    config.replicas = 1;
    assert_eq!(run_ensemble(&config).unwrap(), vec![a[0].clone()]);
}

#[test]
fn energy_is_conserved_over_many_events() {
    let mut config = one_type_sampled(100, DensityFamily::gamma(2.0, 1.0), f64::MAX);
    config.snapshot_times = vec![];
    config.max_events = Some(1_000_000);
    let traj = run(&config).unwrap();
    assert_eq!(traj.events, 1_000_000);
    let types = TypeTable::single();
    let end = total_energy(&traj.final_state, &types).unwrap();
    assert!((end - traj.initial_energy).abs() <= 1e-9 * traj.initial_energy);
    assert_eq!(traj.final_state.len(), 100);
}

fn two_type_canonical() -> (ReactionNetwork, InitialState) {
    let (g, e) = (DensityFamily::gamma(2.0, 1.0), DensityFamily::exponential(1.0));
    let (t1, t2) = (TypeId(1), TypeId(2));
    let ch = |a, b, ra: &DensityFamily, rb: &DensityFamily| BinaryChannel {
        reactants: (a, b),
        rate: BinaryRate::constant(1.0),
        kernel: ScatteringKernel::canonical(a, b, ra.clone(), rb.clone()),
    };
    let net = ReactionNetwork::new(
        TypeTable::new(vec![0.0, 1.0]).unwrap(),
        vec![ch(t1, t1, &g, &g), ch(t2, t2, &e, &e), ch(t1, t2, &g, &e)],
        vec![],
    )
    .unwrap();
    let init = InitialState::Sampled(vec![
        SpeciesSample {
            type_id: t1,
            count: 150,
            density: g,
        },
        SpeciesSample {
            type_id: t2,
            count: 150,
            density: e,
        },
    ]);
    (net, init)
}

#[test]
fn type_preserving_channels_keep_counts() {
    let (net, init) = two_type_canonical();
    assert!(net.type_preserving());
    let mut config = SimulatorConfig::new(net, init, 20.0);
    config.snapshot_times = (0..=20).map(f64::from).collect();
    let traj = run(&config).unwrap();
    assert!(traj.events > 1000);
    for s in &traj.snapshots {
        assert_eq!(s.counts, vec![150, 150]);
    }
    assert!(traj.snapshots.windows(2).all(|w| w[0].events <= w[1].events));
}

#[test]
fn canonical_marginals_stay_invariant() {
    let (net, init) = two_type_canonical();
    let mut config = SimulatorConfig::new(net, init, f64::MAX);
    config.snapshot_times = vec![];
    config.max_events = Some(3000);
    config.replicas = 6;
    config.seed = 31;
    let runs = run_ensemble(&config).unwrap();
    let pooled = |v| -> Vec<f64> { runs.iter().flat_map(|r| r.final_state.energies_of(TypeId(v))).collect() };
    let (a, b) = (pooled(1), pooled(2));
    let g = DensityFamily::gamma(2.0, 1.0);
    assert!(ks_distance(&a, |x| g.cdf(x)).unwrap() < ks_critical(a.len()));
    assert!(ks_distance(&b, |x| 1.0 - (-x).exp()).unwrap() < ks_critical(b.len()));
}

#[test]
fn histograms_match_direct_counts() {
    let mut rng = replica_rng(41, 0);
    let particles: Vec<Particle> = (0..500)
        .map(|_| Particle::new(rng.random_range(1..=3), rng.random_range(0.0..5.0)))
        .collect();
    let state = ParticleSystem::new(particles.clone());
    let edges = [0.0, 0.5, 1.25, 2.0, 3.5, 5.0];
    let mut total_mass = 0.0;
    for v in 1..=3 {
        let h = empirical_histogram(&state, TypeId(v), &edges).unwrap();
        for b in 0..5 {
            let count = particles
                .iter()
                .filter(|p| p.type_id == TypeId(v) && p.kinetic_energy >= edges[b] && p.kinetic_energy < edges[b + 1])
                .count();
            let width = edges[b + 1] - edges[b];
            assert!((h[b] - count as f64 / (500.0 * width)).abs() < 1e-12);
            total_mass += h[b] * width;
        }
    }
    assert!((total_mass - 1.0).abs() < 1e-12);
    let single = ParticleSystem::new(vec![Particle::new(1, 0.5)]);
    assert_eq!(empirical_histogram(&single, TypeId(1), &[0.0, 1.0]).unwrap(), vec![1.0]);
    assert!(empirical_histogram(&single, TypeId(1), &[1.0]).is_err());
}

#[test]
fn replica_averages_tighten_like_one_over_replicas() {
    let edges: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
    let bin = 1;
    let spread = |replicas: usize| -> f64 {
        // variance across 30 independent ensemble means
        let means: Vec<f64> = (0..30u64)
            .map(|s| {
                let mut config = one_type_sampled(100, DensityFamily::uniform(0.0, 2.0), 0.5);
                config.histogram_edges = edges.clone();
                config.replicas = replicas;
                config.seed = 1000 + s;
                let runs = run_ensemble(&config).unwrap();
                runs.iter().map(|r| r.snapshots[0].histograms[0][bin]).sum::<f64>() / replicas as f64
            })
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64
    };
    let ratio = spread(2) / spread(8);
    // expected 4; the variance estimate over 30 means has about 26% relative error
    assert!(ratio > 2.0 && ratio < 8.0, "{ratio}");
}

#[test]
fn energy_dependent_unary_law_is_invariant_under_simulation() {
    // V = 2, p = (1/2, 1/2), b symmetric, ν = (1, 1), I = (0, 1), β = 1:
    // π ∝ (1, e^-1) and the kinetic energy is Exp(1) in either type
    let pi1 = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((pi1 - 0.7311).abs() < 5e-5);
    let rate = |c| UnaryRate::PowerGap {
        coefficient: c,
        exponent: 0.0,
    };
    let net = ReactionNetwork::new(
        TypeTable::new(vec![0.0, 1.0]).unwrap(),
        vec![],
        vec![
            UnaryChannel {
                from: TypeId(1),
                to: TypeId(2),
                rate: rate(1.0),
            },
            UnaryChannel {
                from: TypeId(2),
                to: TypeId(1),
                rate: rate(1.0),
            },
        ],
    )
    .unwrap();
    let m = 20_000;
    let n1 = (pi1 * m as f64).round() as usize;
    let species = |v, count| SpeciesSample {
        type_id: TypeId(v),
        count,
        density: DensityFamily::exponential(1.0),
    };
    let mut config = SimulatorConfig::new(
        net,
        InitialState::Sampled(vec![species(1, n1), species(2, m - n1)]),
        10.0,
    );
    config.seed = 51;
    let traj = run(&config).unwrap();
    let occupancy = traj.snapshots[0].counts[0] as f64 / m as f64;
    let sigma = (pi1 * (1.0 - pi1) / m as f64).sqrt();
    assert!((occupancy - pi1).abs() < 3.0 * sigma, "{occupancy} vs {pi1}");
}

#[test]
fn simulation_faults_carry_event_context() {
    let net = ReactionNetwork::one_type_uniform(1.0).unwrap();
    let bad = ParticleSystem::new(vec![Particle::new(2, 1.0), Particle::new(1, 1.0)]);
    let config = SimulatorConfig::new(net, InitialState::Particles(bad), 1.0);
    assert!(run(&config).is_err());
}
