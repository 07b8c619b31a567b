mod common;

use aoi_pomdp::baselines::exact_mdp_solve;
use aoi_pomdp::belief_mdp::{build_augmented_kernel, q_values};
use aoi_pomdp::chain::{policy_chain, recurrent_class_count};
use aoi_pomdp::structure::{column_violations, policy_threshold_profile};
use aoi_pomdp::*;
use common::{evaluate, exact_step, OracleModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle_for(space: &TruncatedBeliefSpace) -> OracleModel {
    let p = space.params();
    OracleModel {
        lambda: p.lambda,
        p: p.p,
        battery: p.battery,
        delta_max: p.delta_max,
        depth: space.depth(),
        beta0: space.initial_belief().as_slice().to_vec(),
    }
}

fn solved(lambda: f64, p: f64, battery: usize, dmax: usize, depth: usize) -> (BeliefMdp, SolveResult) {
    let params = ModelParams::new(lambda, p, battery, dmax).with_depth(depth);
    let mdp = BeliefMdp::build(TruncatedBeliefSpace::uniform(&params).unwrap());
    let res = mdp.solve().unwrap();
    (mdp, res)
}

#[test]
fn optimal_cost_matches_policy_evaluation_oracle() {
    let (mdp, res) = solved(0.06, 0.8, 2, 64, 32);
    let oracle = oracle_for(&mdp.space);
    let start = (2, 0, false, 1);
    let (cost, _) = evaluate(start, |s, a| oracle.step(s, a), |(row, col, request, age)| {
        res.policy[mdp.indexer.index(BeliefState {
            belief: BeliefIndex::new(row, col),
            request,
            age,
        })]
        .is_command()
    });
    assert!((cost - res.c_star).abs() < 1e-6, "oracle {cost} vs solver {}", res.c_star);
    assert!(res.residual <= rvi::RESIDUAL_KAPPA * 1e-7);
}

#[test]
fn small_instance_matches_oracle_and_is_unichain() {
    let (mdp, res) = solved(0.3, 0.6, 2, 8, 5);
    let oracle = oracle_for(&mdp.space);
    let policy = |(row, col, request, age)| {
        res.policy[mdp.indexer.index(BeliefState {
            belief: BeliefIndex::new(row, col),
            request,
            age,
        })]
        .is_command()
    };
    // Start from the initial belief this time.
    let (cost, _) = evaluate((0, 0, false, 1), |s, a| oracle.step(s, a), policy);
    assert!((cost - res.c_star).abs() < 1e-6);
    let chain = policy_chain(&mdp.kernel, &res.policy);
    assert_eq!(recurrent_class_count(&chain), 1);
}

#[test]
fn q_values_match_explicit_expansion() {
    let params = ModelParams::new(0.2, 0.7, 3, 10).with_depth(6);
    let space = TruncatedBeliefSpace::uniform(&params).unwrap();
    let mdp = BeliefMdp::build(space.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h: Vec<f64> = (0..mdp.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let hv = |row, col, request, age| {
        h[mdp.indexer.index(BeliefState {
            belief: BeliefIndex::new(row, col),
            request,
            age,
        })]
    };
    let (p, dmax) = (params.p, params.delta_max);
    for z in mdp.indexer.states() {
        let beta = space.get(z.belief).as_slice();
        let r = if z.request { 1.0 } else { 0.0 };
        let stale = (z.age + 1).min(dmax);
        let next_col = (z.belief.col + 1).min(space.depth());
        let mix = |row, col, age| (1.0 - p) * hv(row, col, false, age) + p * hv(row, col, true, age);
        let q0 = r * stale as f64 + mix(z.belief.row, next_col, stale);
        let mut q1 = r * (beta[0] * stale as f64 + (1.0 - beta[0])) + beta[0] * mix(1, 0, stale);
        for (j, &bj) in beta.iter().enumerate().skip(1) {
            q1 += bj * mix(j, 0, 1);
        }
        let (s0, s1) = q_values(&h, z, &mdp.indexer, &mdp.kernel);
        assert!((s0 - q0).abs() < 1e-12 && (s1 - q1).abs() < 1e-12, "{z:?}");
    }
}

#[test]
fn saturated_energy_costs_p() {
    for p in [0.3, 0.8, 1.0] {
        let (_, res) = solved(1.0, p, 1, 64, 4);
        assert!((res.c_star - p).abs() < 1e-8, "p={p}: {}", res.c_star);
    }
}

#[test]
fn starved_sensor_costs_nearly_p_times_cap() {
    let (_, res) = solved(1e-9, 0.8, 2, 64, 8);
    let target = 0.8 * 64.0;
    assert!((res.c_star - target).abs() / target < 0.005, "{}", res.c_star);
}

#[test]
fn solved_values_satisfy_bellman_equation() {
    let (mdp, res) = solved(0.1, 0.8, 2, 16, 10);
    for z in 0..mdp.len() {
        let (q0, q1) = mdp.kernel.q_values(&res.h, z);
        assert!((q0.min(q1) - res.c_star - res.h[z]).abs() <= rvi::RESIDUAL_KAPPA * 1e-7 + 1e-12);
    }
    assert!(res.c_star >= 0.0 && res.c_star <= 0.8 * 16.0);
}

#[test]
fn tighter_threshold_keeps_policy() {
    let (mdp, res) = solved(0.08, 0.8, 2, 32, 12);
    let tight = mdp.solve_with(&RviOptions::new(1e-8)).unwrap();
    assert_eq!(res.policy, tight.policy);
}

#[test]
fn exact_mdp_matches_its_own_oracle() {
    let params = ModelParams::new(0.08, 0.8, 2, 64);
    let exact = exact_mdp_solve(&params).unwrap();
    let step = exact_step(0.08, 0.8, 2, 64);
    let (cost, _) = evaluate((2, false, 1), step, |(b, r, age)| exact.action(b, r, age).is_command());
    assert!((cost - exact.c_star_exact).abs() < 1e-6);
}

#[test]
fn exact_knowledge_is_a_lower_bound() {
    for (lambda, battery) in [(0.04, 2), (0.08, 2), (0.06, 3)] {
        let params = ModelParams::new(lambda, 0.8, battery, 64).with_depth(32);
        let exact = exact_mdp_solve(&params).unwrap();
        let res = BeliefMdp::build(TruncatedBeliefSpace::uniform(&params).unwrap()).solve().unwrap();
        assert!(exact.c_star_exact <= res.c_star + 1e-6);
    }
}

#[test]
fn policy_has_threshold_structure() {
    let (mdp, res) = solved(0.06, 0.8, 2, 64, 32);
    let profile = policy_threshold_profile(&res.policy, &mdp.indexer);
    assert!(profile.idle_commands.is_empty());
    assert!(profile.is_monotone());
    assert!(column_violations(&res.policy, &mdp.indexer).is_empty());
    // The fresh ρ² belief is charged before an empty one.
    let full = profile.threshold(BeliefIndex::new(2, 0));
    let empty = profile.threshold(BeliefIndex::new(1, 0));
    assert!(full.unwrap() <= empty.unwrap_or(usize::MAX));
}

#[test]
fn value_does_not_depend_on_reported_level() {
    let params = ModelParams::new(0.3, 0.8, 2, 8).with_depth(4);
    let space = TruncatedBeliefSpace::uniform(&params).unwrap();
    let kernel = build_augmented_kernel(&space, &params);
    let mut opts = RviOptions::new(1e-11);
    opts.max_iterations = 1_000_000;
    let res = rvia_solve(&kernel, &opts).unwrap();
    for z in 0..kernel.len() / 2 {
        assert!((res.h[2 * z] - res.h[2 * z + 1]).abs() < 1e-8);
    }
    let reduced = BeliefMdp::build(space).solve_with(&opts).unwrap();
    assert!((reduced.c_star - res.c_star).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernels_are_stochastic_with_structural_counts(
        lambda in 0.01f64..=1.0,
        p in 0.0f64..=1.0,
        battery in 1usize..=4,
        dmax in 2usize..=12,
        depth in 1usize..=8,
    ) {
        let params = ModelParams::new(lambda, p, battery, dmax).with_depth(depth);
        let mdp = BeliefMdp::build(TruncatedBeliefSpace::uniform(&params).unwrap());
        prop_assert_eq!(mdp.len(), 2 * (battery + 1) * (depth + 1) * dmax);
        for z in 0..mdp.len() {
            prop_assert_eq!(mdp.kernel.structural_nnz.0[z], 2);
            prop_assert_eq!(mdp.kernel.structural_nnz.1[z], 2 * (battery + 1));
            prop_assert!((mdp.kernel.p0.row_sum(z) - 1.0).abs() < 1e-12);
            prop_assert!((mdp.kernel.p1.row_sum(z) - 1.0).abs() < 1e-12);
            prop_assert!(mdp.kernel.p0.row(z).chain(mdp.kernel.p1.row(z)).all(|(_, w)| w >= 0.0));
        }
    }

    #[test]
    fn optimal_cost_is_bounded(lambda in 0.05f64..=1.0, p in 0.0f64..=1.0) {
        let params = ModelParams::new(lambda, p, 2, 8).with_depth(4);
        let res = BeliefMdp::build(TruncatedBeliefSpace::uniform(&params).unwrap()).solve().unwrap();
        prop_assert!(res.c_star >= -1e-9 && res.c_star <= p * 8.0 + 1e-9);
        prop_assert!(res.iterations >= 2);
    }
}
