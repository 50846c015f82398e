use proptest::prelude::*;

use enerkin::analysis::balance::{
    detailed_balance_residual, fixed_point_residual, local_equilibrium_residual, BalanceConfig,
};
use enerkin::analysis::canonical::measure_transform;
use enerkin::analysis::entropy::relative_entropy;
use enerkin::analysis::kolmogorov::{kolmogorov_cycle_check, DiscreteChainSpec};
use enerkin::analysis::ks::ks_distance;
use enerkin::analysis::SpeciesDensity;
use enerkin::density::DensityFamily;
use enerkin::kernel::EnergySplit;
use enerkin::kinetics::{apply_collision, collision_feasible, total_energy, CollisionOutcome};
use enerkin::quad::integrate;
use enerkin::scenario::parse_scenario;
use enerkin::sim::{run, InitialState, SimulatorConfig};
use enerkin::solver::{mass, rhs_multitype, DensityGrid};
use enerkin::{Particle, ParticleSystem, ReactionNetwork, TypeId, TypeTable};

fn density() -> impl Strategy<Value = DensityFamily> {
    prop_oneof![
        (0.3..4.0f64).prop_map(DensityFamily::exponential),
        (0.5..5.0f64, 0.3..4.0f64).prop_map(|(a, r)| DensityFamily::gamma(a, r)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn collisions_conserve_total_energy(
        energies in prop::collection::vec(0.0..3.0f64, 3),
        inputs in ((1usize..=3, 0.0..5.0f64), (1usize..=3, 0.0..5.0f64)),
        outputs in (1usize..=3, 1usize..=3),
        share in 0.0..=1.0f64,
    ) {
        let types = TypeTable::new(energies).unwrap();
        let ((v, t), (w, u)) = inputs;
        let (v1, w1) = (TypeId(outputs.0), TypeId(outputs.1));
        let system = ParticleSystem::new(vec![Particle::new(v, t), Particle::new(w, u)]);
        let before = total_energy(&system, &types).unwrap();
        let available = types.energy(TypeId(v)) + t + types.energy(TypeId(w)) + u - types.energy(v1) - types.energy(w1);
        let feasible = collision_feasible(TypeId(v), t, TypeId(w), u, v1, w1, &types);
        prop_assert_eq!(feasible, available >= 0.0);
        let outcome = CollisionOutcome { first: v1, energy: share * available.max(0.0), second: w1 };
        match apply_collision(&system, 0, 1, outcome, &types) {
            Ok(after) => {
                prop_assert!(feasible);
                let e = total_energy(&after, &types).unwrap();
                prop_assert!((e - before).abs() <= 1e-12 * before.max(1.0));
                prop_assert!(after.particles.iter().all(|p| p.kinetic_energy >= 0.0));
            }
            Err(_) => prop_assert!(!feasible),
        }
    }

    #[test]
    fn measure_transform_is_monotone(rho in density(), beta in 0.2..5.0f64, a in 0.0..10.0f64, b in 0.0..10.0f64) {
        let (lo, hi) = (a.min(b), a.max(b));
        let (u, v) = (measure_transform(&rho, beta, lo), measure_transform(&rho, beta, hi));
        if let (Ok(u), Ok(v)) = (u, v) {
            prop_assert!(u <= v);
            prop_assert!(u >= 0.0);
        }
    }

    #[test]
    fn ks_distance_is_a_probability_gap(samples in prop::collection::vec(-5.0..20.0f64, 1..200), rate in 0.1..5.0f64) {
        let d = ks_distance(&samples, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-rate * x).exp() }).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn canonical_kernels_are_normalized(
        a in 1usize..=4, b in 1usize..=4,
        r1 in 0.5..3.0f64, same_rate in any::<bool>(), r2 in 0.5..3.0f64,
        s in 0.1..10.0f64,
    ) {
        let r2 = if same_rate { r1 } else { r2 };
        let split = EnergySplit::canonical(DensityFamily::gamma(a as f64, r1), DensityFamily::gamma(b as f64, r2));
        let z = split.normalizer(s).unwrap();
        let total = integrate(|u| split.density_with(u, s, z), 0.0, s, 64);
        prop_assert!((total - 1.0).abs() < 1e-8, "{}", total);
    }

    #[test]
    fn detailed_balanced_chains_satisfy_kolmogorov(
        p in prop::collection::vec(0.1..5.0f64, 3..6),
        flows in prop::collection::vec(prop_oneof![Just(0.0), 0.1..3.0f64], 15),
    ) {
        let n = p.len();
        let mut rates = vec![vec![0.0; n]; n];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                // p_i r_ij = p_j r_ji = flow
                rates[i][j] = flows[k] / p[i];
                rates[j][i] = flows[k] / p[j];
                k += 1;
            }
        }
        let report = kolmogorov_cycle_check(&DiscreteChainSpec::new(rates).unwrap(), 6).unwrap();
        prop_assert!(report.pass, "{:?}", report);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn relative_entropy_is_never_positive(f in density(), f0 in density()) {
        let h = relative_entropy(&SpeciesDensity::single(f).unwrap(), &SpeciesDensity::single(f0).unwrap(), 60.0, 4000).unwrap();
        prop_assert!(h <= 1e-6, "{}", h);
    }

    #[test]
    fn simulation_conserves_energy_and_population(
        energies in prop::collection::vec(0.0..3.0f64, 2..=5),
        seed in any::<u64>(),
    ) {
        let types = TypeTable::new(vec![0.0, 0.4]).unwrap();
        let net = ReactionNetwork::new(
            types.clone(),
            (1..=2)
                .flat_map(|a| (a..=2).map(move |b| (a, b)))
                .map(|(a, b)| enerkin::network::BinaryChannel {
                    reactants: (TypeId(a), TypeId(b)),
                    rate: enerkin::rates::BinaryRate::constant(1.0),
                    kernel: enerkin::kernel::ScatteringKernel::uniform(TypeId(a), TypeId(b)),
                })
                .collect(),
            vec![
                enerkin::network::UnaryChannel {
                    from: TypeId(1),
                    to: TypeId(2),
                    rate: enerkin::rates::UnaryRate::constant(0.5),
                },
                enerkin::network::UnaryChannel {
                    from: TypeId(2),
                    to: TypeId(1),
                    rate: enerkin::rates::UnaryRate::constant(0.5),
                },
            ],
        )
        .unwrap();
        let particles: Vec<Particle> = energies.iter().enumerate().map(|(k, &e)| Particle::new(1 + k % 2, e)).collect();
        let m = particles.len();
        let mut config = SimulatorConfig::new(net, InitialState::Particles(ParticleSystem::new(particles)), 5.0);
        config.seed = seed;
        config.snapshot_times = vec![0.0, 2.5, 5.0];
        let traj = run(&config).unwrap();
        for s in &traj.snapshots {
            prop_assert_eq!(s.counts.iter().sum::<usize>(), m);
            let e = total_energy(&s.state, &types).unwrap();
            prop_assert!((e - traj.initial_energy).abs() <= 1e-9 * traj.initial_energy.max(1.0));
        }
    }

    #[test]
    fn solver_rhs_conserves_mass(values in prop::collection::vec(0.0..2.0f64, 40), alpha in 0.1..3.0f64) {
        // support in the lower half, so no gain lands past the grid
        let grid = DensityGrid { x_max: 8.0, n_cells: 80, values: vec![values.iter().cloned().chain(std::iter::repeat_n(0.0, 40)).collect()] };
        let rhs = rhs_multitype(&grid, &ReactionNetwork::one_type_uniform(alpha).unwrap()).unwrap();
        let change: f64 = rhs[0].iter().sum::<f64>() * grid.h();
        prop_assert!(change.abs() <= 1e-12 * (alpha * mass(&grid).powi(2)).max(1.0), "{}", change);
    }

    #[test]
    fn scenarios_round_trip(
        alpha in 0.01..10.0f64,
        count in 1usize..5000,
        rate in 0.1..5.0f64,
        seed in any::<u64>(),
        t_end in 0.0..100.0f64,
    ) {
        let text = serde_json::json!({
            "schema": "enerkin/1",
            "types": [{ "internal_energy": 0.0 }],
            "binary_channels": [{ "reactants": [1, 1], "rate": { "kind": "constant", "value": alpha }, "kernel": { "kind": "uniform" } }],
            "initial": { "kind": "sampled", "species": [{ "type_id": 1, "count": count, "density": { "kind": "exponential", "rate": rate } }] },
            "simulation": { "t_end": t_end, "seed": seed }
        })
        .to_string();
        let scenario = parse_scenario(&text, "generated").unwrap();
        let again = parse_scenario(&scenario.to_json().unwrap(), "again").unwrap();
        prop_assert_eq!(scenario, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn balance_implies_local_and_global_equilibrium(beta in 0.3..3.0f64, alpha in 0.2..4.0f64) {
        let net = ReactionNetwork::one_type_uniform(alpha).unwrap();
        let f0 = SpeciesDensity::single(DensityFamily::exponential(beta)).unwrap();
        let config = |samples| BalanceConfig { samples, energy_scale: 10.0 / beta, outer_limit: 40.0 / beta, ..BalanceConfig::default() };
        let db = detailed_balance_residual(&net, &f0, &config(200)).unwrap().max;
        prop_assert!(db < 1e-12);
        let le = local_equilibrium_residual(&net, &f0, &config(40)).unwrap().max;
        prop_assert!(le < 1e-8 * alpha.max(1.0) * beta.max(1.0).powi(2), "{}", le);
        let fp = fixed_point_residual(&net, &f0, &config(8)).unwrap().max;
        prop_assert!(fp < 1e-8 * alpha.max(1.0) * beta.max(1.0).powi(2), "{}", fp);
    }
}
