//! Random fixtures for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{GameParts, StochasticGame};

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Dense random game with uniform action counts.
pub(crate) fn random_game(num_dms: usize, num_states: usize, num_actions: usize, seed: u64) -> StochasticGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joint = num_actions.pow(num_dms as u32);
    let costs = (0..num_dms)
        .map(|_| (0..num_states * joint).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let kernel = (0..num_states * joint)
        .flat_map(|_| random_simplex(&mut rng, num_states))
        .collect();
    StochasticGame::new(GameParts {
        num_states,
        action_counts: vec![num_actions; num_dms],
        costs,
        kernel,
        discounts: vec![0.7; num_dms],
        initial_dist: vec![1.0 / num_states as f64; num_states],
    })
    .unwrap()
}

/// A single-DM game, i.e. an MDP.
pub(crate) fn single_mdp(num_states: usize, num_actions: usize, beta: f64, seed: u64) -> StochasticGame {
    let g = random_game(1, num_states, num_actions, seed);
    let kernel = (0..num_states)
        .flat_map(|x| (0..num_actions).flat_map(move |u| (0..num_states).map(move |y| (x, u, y))))
        .map(|(x, u, y)| g.kernel_row(x, u)[y])
        .collect();
    StochasticGame::new(GameParts {
        num_states,
        action_counts: vec![num_actions],
        costs: vec![g.cost_table(0).to_vec()],
        kernel,
        discounts: vec![beta],
        initial_dist: g.initial_dist().to_vec(),
    })
    .unwrap()
}
