mod common;

use common::{all_own, random_game};
use decq::solver::InducedMdp;
use decq::{
    best_reply_set, bellman_optimal_operator, optimal_q_factors, policy_q_factors, policy_value, QTable,
    RandomizedPolicy, SolverConfig,
};
use proptest::prelude::*;

fn pure_opponent(game: &decq::StochasticGame, dm: usize, index: usize) -> RandomizedPolicy {
    decq::DeterministicPolicy::from_index(dm, game.num_actions(dm), game.num_states(), index).to_randomized()
}

/// Best replies by evaluating every own policy and keeping the pointwise minimizers.
fn exhaustive_best(game: &decq::StochasticGame, dm: usize, opponents: &[RandomizedPolicy], tol: f64) -> Vec<Vec<usize>> {
    let mdp = InducedMdp::new(game, dm, opponents).unwrap();
    let own = all_own(game, dm);
    let values: Vec<Vec<f64>> = own.iter().map(|p| mdp.evaluate_deterministic(p).unwrap()).collect();
    let best: Vec<f64> = (0..game.num_states())
        .map(|x| values.iter().map(|v| v[x]).fold(f64::INFINITY, f64::min))
        .collect();
    own.iter()
        .zip(&values)
        .filter(|(_, v)| v.iter().zip(&best).all(|(a, b)| *a <= b + tol))
        .map(|(p, _)| p.actions().to_vec())
        .collect()
}

#[test]
fn best_replies_match_exhaustive_evaluation() {
    let cfg = SolverConfig {
        tol: 1e-9,
        ..SolverConfig::default()
    };
    for seed in 0..40 {
        let game = random_game(2, 2, 2, 0.8, seed);
        for dm in 0..2 {
            let other = 1 - dm;
            for opp in 0..4 {
                let opponents = [pure_opponent(&game, other, opp)];
                let got: Vec<Vec<usize>> = best_reply_set(&game, dm, &opponents, &cfg)
                    .unwrap()
                    .iter()
                    .map(|p| p.actions().to_vec())
                    .collect();
                assert_eq!(got, exhaustive_best(&game, dm, &opponents, 1e-7), "seed {seed} dm {dm} opp {opp}");
            }
        }
    }
}

#[test]
fn optimal_q_is_a_fixed_point() {
    for seed in 0..20 {
        let game = random_game(2, 3, 2, 0.9, seed);
        let opponents = [RandomizedPolicy::uniform(&game, 1)];
        let q = optimal_q_factors(&game, 0, &opponents, 1e-9).unwrap();
        let fq = bellman_optimal_operator(&game, 0, &opponents, &q).unwrap();
        assert!(fq.sup_distance(&q) <= 2e-9, "residual {}", fq.sup_distance(&q));
    }
}

#[test]
fn policy_q_agrees_with_direct_evaluation() {
    let game = random_game(2, 3, 2, 0.75, 11);
    let opponents = [RandomizedPolicy::uniform(&game, 0)];
    for own in all_own(&game, 1) {
        let q = policy_q_factors(&game, 1, &own, &opponents, 1e-11).unwrap();
        let joint = [RandomizedPolicy::uniform(&game, 0), own.to_randomized()];
        let v = policy_value(&game, 1, &joint).unwrap();
        for x in 0..game.num_states() {
            assert!((q.get(x, own.action(x)) - v.values[x]).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bellman_operator_contracts(seed in 0u64..1000, a in prop::collection::vec(-5.0f64..5.0, 6), b in prop::collection::vec(-5.0f64..5.0, 6)) {
        let game = random_game(2, 3, 2, 0.7, seed);
        let opponents = [RandomizedPolicy::uniform(&game, 1)];
        let qa = QTable::from_values(0, 3, 2, a).unwrap();
        let qb = QTable::from_values(0, 3, 2, b).unwrap();
        let fa = bellman_optimal_operator(&game, 0, &opponents, &qa).unwrap();
        let fb = bellman_optimal_operator(&game, 0, &opponents, &qb).unwrap();
        prop_assert!(fa.sup_distance(&fb) <= 0.7 * qa.sup_distance(&qb) + 1e-12);
    }

    #[test]
    fn perturbed_policies_are_distributions(actions in prop::collection::vec(0usize..3, 1..5), rho in 0.001f64..0.999) {
        let p = decq::DeterministicPolicy::new(0, 3, actions.clone()).unwrap();
        let r = p.perturb(rho).unwrap();
        for (x, &a) in actions.iter().enumerate() {
            let d = r.dist(x);
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((d[a] - (1.0 - rho + rho / 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_policy_is_a_best_reply(seed in 0u64..500) {
        let game = random_game(2, 2, 3, 0.8, seed);
        let opponents = [RandomizedPolicy::uniform(&game, 1)];
        let cfg = SolverConfig::default();
        let q = optimal_q_factors(&game, 0, &opponents, cfg.tol).unwrap();
        let best = best_reply_set(&game, 0, &opponents, &cfg).unwrap();
        prop_assert!(best.contains(&q.greedy()));
    }
}
