use aoi_pomdp::multi::*;
use aoi_pomdp::sim::{simulate, BeliefTablePolicy, EpisodeConfig};
use aoi_pomdp::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_classes() -> Vec<ClassModel> {
    default_rates(2)
        .into_iter()
        .map(|l| ClassModel::build(&ModelParams::new(l * 10.0, 0.8, 1, 4).with_depth(6), Knowledge::Belief).unwrap())
        .collect()
}

#[test]
fn zero_penalty_reproduces_unconstrained_policy() {
    let params = ModelParams::new(0.1, 0.8, 2, 16).with_depth(10);
    let sol = lagrangian_per_sensor_solve(&params, 0.0).unwrap();
    let plain = BeliefMdp::build(TruncatedBeliefSpace::uniform(&params).unwrap()).solve().unwrap();
    assert_eq!(sol.policy, plain.policy);
    assert!((sol.c_star - plain.c_star).abs() < 1e-12);
    assert!((sol.cost - plain.c_star).abs() < 1e-6);
}

#[test]
fn large_penalty_stops_all_commands() {
    for (battery, dmax) in [(1, 4), (2, 16), (3, 64)] {
        let params = ModelParams::new(0.05, 0.8, battery, dmax).with_depth(8);
        let sol = lagrangian_per_sensor_solve(&params, 0.8 * (dmax * dmax) as f64).unwrap();
        assert!(sol.policy.iter().all(|a| *a == Action::Wait));
        assert_eq!(sol.command_rate, 0.0);
        assert!((sol.cost - 0.8 * dmax as f64).abs() < 1e-9);
    }
}

#[test]
fn penalty_of_p_times_cap_can_still_command() {
    let params = ModelParams::new(0.05, 0.8, 3, 64).with_depth(8);
    let sol = lagrangian_per_sensor_solve(&params, 0.8 * 64.0).unwrap();
    assert!(sol.command_rate > 0.01);
}

#[test]
fn bracket_grows_past_p_times_cap() {
    let params = ModelParams::new(0.05, 0.8, 3, 64).with_depth(8);
    let classes = vec![ClassModel::build(&params, Knowledge::Belief).unwrap()];
    let relaxed =
        bisect_multiplier(&classes, &[1], 0.02, &BisectionOptions::default(), &mut RelaxationCache::new()).unwrap();
    assert!(relaxed.mu_star > 0.8 * 64.0);
    assert!(relaxed.aggregate_rate <= 0.02);
}

#[test]
fn command_rate_falls_with_penalty() {
    let params = ModelParams::new(0.05, 0.8, 3, 32).with_depth(16);
    let class = ClassModel::build(&params, Knowledge::Belief).unwrap();
    let rates: Vec<f64> = (0..=16)
        .map(|i| solve_class(&class, i as f64 * 0.8).unwrap().command_rate)
        .collect();
    for w in rates.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{rates:?}");
    }
    assert!(rates[0] > rates[16]);
}

#[test]
fn bisection_matches_dense_grid() {
    let classes = toy_classes();
    let weights = [1, 1];
    let budget = 2.0 * 0.2;
    let opts = BisectionOptions {
        rate_tol: 1e-9,
        mu_tol: 1e-4,
        max_steps: 100,
    };
    let mut cache = RelaxationCache::new();
    let relaxed = bisect_multiplier(&classes, &weights, budget, &opts, &mut cache).unwrap();
    assert!(relaxed.aggregate_rate <= budget);
    assert!(relaxed.slack >= 0.0);

    // Smallest feasible multiplier on a grid with step 0.005 over [0, p·Δmax].
    let step = 0.005;
    let grid_mu = (0..=640)
        .map(|i| i as f64 * step)
        .find(|&mu| {
            let rate: f64 = classes.iter().map(|c| solve_class(c, mu).unwrap().command_rate).sum();
            rate <= budget
        })
        .unwrap();
    let tol = opts.mu_tol * grid_mu.max(1.0);
    assert!(relaxed.mu_star <= grid_mu + tol, "{} vs {grid_mu}", relaxed.mu_star);
    assert!(relaxed.mu_star > grid_mu - step - tol, "{} vs {grid_mu}", relaxed.mu_star);
    assert!(relaxed.dual_bound <= relaxed.relaxed_cost + 1e-9);
}

#[test]
fn slack_budget_needs_no_penalty() {
    let classes = toy_classes();
    let mut cache = RelaxationCache::new();
    let relaxed = bisect_multiplier(&classes, &[1, 1], 2.0, &BisectionOptions::default(), &mut cache).unwrap();
    assert_eq!(relaxed.mu_star, 0.0);
    assert_eq!(relaxed.relaxed_cost, relaxed.unconstrained_cost);
    assert_eq!(cache.len(), 2);
}

#[test]
fn truncation_picks_uniform_subsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut hits = [0usize; 4];
    let draws = 100_000;
    for _ in 0..draws {
        let chosen = truncate_commands(&[0, 1, 2, 3], 2, &mut rng);
        assert_eq!(chosen.len(), 2);
        for k in chosen {
            hits[k] += 1;
        }
    }
    for h in hits {
        assert!((h as f64 / draws as f64 - 0.5).abs() < 0.01, "{hits:?}");
    }
}

#[test]
fn single_sensor_network_is_the_single_sensor_simulator() {
    let lambda = 0.1;
    let model = MultiModel::new(1, 1.0, 0.8, 2, 16)
        .with_rates(vec![lambda])
        .with_depth(Depth::Fixed(10), None);
    let net = Network::build(&model, Knowledge::Belief).unwrap();
    let relaxed = net.relax(&BisectionOptions::default(), &mut RelaxationCache::new()).unwrap();
    assert_eq!(relaxed.mu_star, 0.0);
    let cfg = EpisodeConfig::new(40_000, 3, 77);
    let multi = multi_simulate(&net, Some(&relaxed), MultiPolicy::RelaxTruncate, &cfg).unwrap();

    let params = ModelParams::new(lambda, 0.8, 2, 16).with_depth(10);
    let mdp = BeliefMdp::build(TruncatedBeliefSpace::uniform(&params).unwrap());
    let res = mdp.solve().unwrap();
    let single = simulate(&BeliefTablePolicy::new(mdp.indexer, res.policy), &mdp.space, &cfg).unwrap();
    assert_eq!(multi.cost.per_episode, single.per_episode);
    assert_eq!(multi.cost.mean, single.mean);
}

#[test]
fn truncated_policies_stay_within_budget() {
    let model = MultiModel::new(20, 0.1, 0.8, 2, 16).with_depth(Depth::Fixed(12), None);
    let mut cache = RelaxationCache::new();
    let cfg = EpisodeConfig::new(20_000, 3, 9);
    for knowledge in [Knowledge::Belief, Knowledge::ExactBattery] {
        let net = Network::build(&model, knowledge).unwrap();
        let relaxed = net.relax(&BisectionOptions::default(), &mut cache).unwrap();
        assert!(relaxed.aggregate_rate <= 2.0);
        let kinds: &[MultiPolicy] = match knowledge {
            Knowledge::Belief => &[MultiPolicy::RelaxTruncate, MultiPolicy::GreedyN, MultiPolicy::LowerBound],
            Knowledge::ExactBattery => &[MultiPolicy::ExactBatteryRelaxTruncate],
        };
        for &kind in kinds {
            let est = multi_simulate(&net, Some(&relaxed), kind, &cfg).unwrap();
            if kind != MultiPolicy::LowerBound {
                assert!(est.feasible(), "{}", kind.name());
                assert!(est.max_commands <= 2);
            }
        }
    }
}

#[test]
fn relaxed_kinds_require_matching_policy() {
    let model = MultiModel::new(4, 0.5, 0.8, 1, 8).with_depth(Depth::Fixed(4), None);
    let net = Network::build(&model, Knowledge::Belief).unwrap();
    let cfg = EpisodeConfig::new(100, 1, 0);
    assert!(multi_simulate(&net, None, MultiPolicy::RelaxTruncate, &cfg).is_err());
    assert!(multi_simulate(&net, None, MultiPolicy::GreedyN, &cfg).is_ok());
    let relaxed = net.relax(&BisectionOptions::default(), &mut RelaxationCache::new()).unwrap();
    assert!(multi_simulate(&net, Some(&relaxed), MultiPolicy::ExactBatteryRelaxTruncate, &cfg).is_err());
}
