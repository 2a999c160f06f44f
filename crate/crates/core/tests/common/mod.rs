#![allow(dead_code)]

use decq::{GameParts, StochasticGame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// General-sum game with independent costs per DM.
pub fn random_game(num_dms: usize, num_states: usize, num_actions: usize, beta: f64, seed: u64) -> StochasticGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joint = num_actions.pow(num_dms as u32);
    let costs = (0..num_dms)
        .map(|_| (0..num_states * joint).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let kernel = (0..num_states * joint).flat_map(|_| simplex(&mut rng, num_states)).collect();
    StochasticGame::new(GameParts {
        num_states,
        action_counts: vec![num_actions; num_dms],
        costs,
        kernel,
        discounts: vec![beta; num_dms],
        initial_dist: vec![1.0 / num_states as f64; num_states],
    })
    .unwrap()
}

/// Every deterministic policy of `dm`, as own-policy indices.
pub fn all_own(game: &StochasticGame, dm: usize) -> Vec<decq::DeterministicPolicy> {
    let (na, ns) = (game.num_actions(dm), game.num_states());
    (0..na.pow(ns as u32))
        .map(|i| decq::DeterministicPolicy::from_index(dm, na, ns, i))
        .collect()
}
