//! Stationary policies and their enumeration.
//!
//! A deterministic policy of DM `i` is indexed by reading its actions as a
//! base-`|U^i|` number with state 0 as the most significant digit. Joint
//! policies are indexed the same way over per-DM policy indices, DM 0 first.
//! These indices are the node IDs of the reply graphs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{StochasticGame, PROB_SUM_TOL};

/// Default cap on the number of enumerated joint policies.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// A stationary deterministic policy `X -> U^i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    dm: usize,
    num_actions: usize,
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(dm: usize, num_actions: usize, actions: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::ActionOutOfRange {
                dm,
                action: bad,
                num_actions,
            });
        }
        Ok(Self {
            dm,
            num_actions,
            actions,
        })
    }

    /// The policy playing `action` in every state.
    pub fn constant(game: &StochasticGame, dm: usize, action: usize) -> Result<Self> {
        Self::new(dm, game.num_actions(dm), vec![action; game.num_states()])
    }

    pub fn dm(&self) -> usize {
        self.dm
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn action(&self, x: usize) -> usize {
        self.actions[x]
    }

    /// Policy index: actions read as a base-`|U^i|` number, state 0 first.
    pub fn index(&self) -> usize {
        self.actions.iter().fold(0, |acc, &a| acc * self.num_actions + a)
    }

    /// Inverse of [`DeterministicPolicy::index`].
    pub fn from_index(dm: usize, num_actions: usize, num_states: usize, mut index: usize) -> Self {
        let mut actions = vec![0; num_states];
        for slot in actions.iter_mut().rev() {
            *slot = index % num_actions;
            index /= num_actions;
        }
        Self {
            dm,
            num_actions,
            actions,
        }
    }

    /// Lifts the policy to a point-mass randomized policy.
    pub fn to_randomized(&self) -> RandomizedPolicy {
        let dist = self
            .actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; self.num_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        RandomizedPolicy {
            dm: self.dm,
            dist,
        }
    }

    /// Mixes the policy with the uniform policy: `(1 - rho) * pi + rho * nu`.
    pub fn perturb(&self, rho: f64) -> Result<RandomizedPolicy> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidRho(rho));
        }
        let n = self.num_actions;
        let off = rho / n as f64;
        let on = 1.0 - rho + off;
        let dist = self
            .actions
            .iter()
            .map(|&a| {
                let mut row = vec![off; n];
                row[a] = on;
                row
            })
            .collect();
        Ok(RandomizedPolicy {
            dm: self.dm,
            dist,
        })
    }
}

/// A stationary randomized policy `X -> P(U^i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedPolicy {
    dm: usize,
    dist: Vec<Vec<f64>>,
}

impl RandomizedPolicy {
    pub fn new(dm: usize, dist: Vec<Vec<f64>>) -> Result<Self> {
        for (x, row) in dist.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.is_empty() || row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > PROB_SUM_TOL
            {
                return Err(Error::InvalidParameter(format!(
                    "distribution of DM {dm} at state {x} is not a probability vector"
                )));
            }
        }
        Ok(Self { dm, dist })
    }

    /// The uniform policy `nu^i`.
    pub fn uniform(game: &StochasticGame, dm: usize) -> Self {
        let n = game.num_actions(dm);
        Self {
            dm,
            dist: vec![vec![1.0 / n as f64; n]; game.num_states()],
        }
    }

    pub fn dm(&self) -> usize {
        self.dm
    }

    pub fn dist(&self, x: usize) -> &[f64] {
        &self.dist[x]
    }

    pub fn num_states(&self) -> usize {
        self.dist.len()
    }

    pub fn num_actions(&self) -> usize {
        self.dist.first().map_or(0, Vec::len)
    }
}

/// A tuple `(pi^1, ..., pi^N)` of deterministic policies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointPolicy {
    policies: Vec<DeterministicPolicy>,
}

impl JointPolicy {
    pub fn new(policies: Vec<DeterministicPolicy>) -> Result<Self> {
        for (i, p) in policies.iter().enumerate() {
            if p.dm != i {
                return Err(Error::Shape(format!(
                    "policy in slot {i} belongs to DM {}",
                    p.dm
                )));
            }
        }
        Ok(Self { policies })
    }

    pub fn num_dms(&self) -> usize {
        self.policies.len()
    }

    pub fn policy(&self, dm: usize) -> &DeterministicPolicy {
        &self.policies[dm]
    }

    pub fn policies(&self) -> &[DeterministicPolicy] {
        &self.policies
    }

    /// Randomized lifts of every policy except DM `dm`'s.
    pub fn opponents(&self, dm: usize) -> Vec<RandomizedPolicy> {
        self.policies
            .iter()
            .filter(|p| p.dm != dm)
            .map(DeterministicPolicy::to_randomized)
            .collect()
    }

    /// Replaces DM `candidate.dm()`'s policy.
    pub fn with_policy(&self, candidate: DeterministicPolicy) -> Self {
        let mut out = self.clone();
        let dm = candidate.dm;
        out.policies[dm] = candidate;
        out
    }
}

/// Index arithmetic over `Pi^i` and `Pi = Pi^1 x ... x Pi^N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySpace {
    num_states: usize,
    action_counts: Vec<usize>,
    own_counts: Vec<usize>,
    joint_strides: Vec<usize>,
    joint_total: usize,
}

impl PolicySpace {
    /// Fails if `prod_i |U^i|^|X|` exceeds `cap`.
    pub fn new(game: &StochasticGame, cap: u128) -> Result<Self> {
        let mut total: u128 = 1;
        let mut own_counts = Vec::with_capacity(game.num_dms());
        for &n in game.action_counts() {
            let mut own: u128 = 1;
            for _ in 0..game.num_states() {
                own = own.saturating_mul(n as u128);
            }
            total = total.saturating_mul(own);
            if total > cap {
                return Err(Error::CapExceeded { size: total, cap });
            }
            own_counts.push(own as usize);
        }
        let mut joint_strides = vec![1; own_counts.len()];
        for dm in (0..own_counts.len().saturating_sub(1)).rev() {
            joint_strides[dm] = joint_strides[dm + 1] * own_counts[dm + 1];
        }
        Ok(Self {
            num_states: game.num_states(),
            action_counts: game.action_counts().to_vec(),
            own_counts,
            joint_strides,
            joint_total: total as usize,
        })
    }

    pub fn num_dms(&self) -> usize {
        self.own_counts.len()
    }

    /// `|Pi^i|`
    pub fn own_count(&self, dm: usize) -> usize {
        self.own_counts[dm]
    }

    /// `|Pi|`
    pub fn joint_count(&self) -> usize {
        self.joint_total
    }

    pub fn own_actions(&self, dm: usize, mut index: usize) -> Vec<usize> {
        let n = self.action_counts[dm];
        let mut actions = vec![0; self.num_states];
        for slot in actions.iter_mut().rev() {
            *slot = index % n;
            index /= n;
        }
        actions
    }

    pub fn own_index(&self, dm: usize, actions: &[usize]) -> usize {
        let n = self.action_counts[dm];
        actions.iter().fold(0, |acc, &a| acc * n + a)
    }

    pub fn own_policy(&self, dm: usize, index: usize) -> DeterministicPolicy {
        DeterministicPolicy {
            dm,
            num_actions: self.action_counts[dm],
            actions: self.own_actions(dm, index),
        }
    }

    /// Per-DM policy indices of joint policy `id`.
    pub fn split(&self, mut id: usize) -> Vec<usize> {
        let mut out = vec![0; self.num_dms()];
        for (dm, slot) in out.iter_mut().enumerate() {
            *slot = id / self.joint_strides[dm];
            id %= self.joint_strides[dm];
        }
        out
    }

    pub fn join(&self, own: &[usize]) -> usize {
        own.iter().zip(&self.joint_strides).map(|(p, s)| p * s).sum()
    }

    /// DM `dm`'s policy index inside joint policy `id`.
    pub fn own_of(&self, id: usize, dm: usize) -> usize {
        (id / self.joint_strides[dm]) % self.own_counts[dm]
    }

    /// Joint policy `id` with DM `dm`'s policy replaced by `own`.
    pub fn replace(&self, id: usize, dm: usize, own: usize) -> usize {
        id - self.own_of(id, dm) * self.joint_strides[dm] + own * self.joint_strides[dm]
    }

    /// Number of deterministic opponent profiles `|Pi^{-i}|`.
    pub fn opponent_count(&self, dm: usize) -> usize {
        self.joint_total / self.own_counts[dm]
    }

    /// Index of the opponent profile `pi^{-i}` inside joint policy `id`.
    pub fn opponent_index(&self, id: usize, dm: usize) -> usize {
        let stride = self.joint_strides[dm];
        let high = id / (stride * self.own_counts[dm]);
        let low = id % stride;
        high * stride + low
    }

    /// A joint policy ID containing opponent profile `opp` (DM `dm` plays policy 0).
    pub fn joint_from_opponents(&self, dm: usize, opp: usize) -> usize {
        let stride = self.joint_strides[dm];
        let high = opp / stride;
        let low = opp % stride;
        high * stride * self.own_counts[dm] + low
    }

    pub fn joint_policy(&self, id: usize) -> JointPolicy {
        let policies = self
            .split(id)
            .into_iter()
            .enumerate()
            .map(|(dm, own)| self.own_policy(dm, own))
            .collect();
        JointPolicy { policies }
    }

    pub fn joint_id(&self, joint: &JointPolicy) -> usize {
        let own: Vec<usize> = joint
            .policies
            .iter()
            .map(|p| self.own_index(p.dm, &p.actions))
            .collect();
        self.join(&own)
    }
}

/// All joint policies in lexicographic order (DM-major, state-minor).
pub fn enumerate_joint_policies(game: &StochasticGame, cap: u128) -> Result<Vec<JointPolicy>> {
    let space = PolicySpace::new(game, cap)?;
    Ok((0..space.joint_count()).map(|id| space.joint_policy(id)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::tests::small_game;
    use crate::game::GameParts;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn single_dm(states: usize, actions: usize) -> StochasticGame {
        let mut kernel = Vec::new();
        for _ in 0..states * actions {
            let mut row = vec![0.0; states];
            row[0] = 1.0;
            kernel.extend(row);
        }
        let mut init = vec![0.0; states];
        init[0] = 1.0;
        StochasticGame::new(GameParts {
            num_states: states,
            action_counts: vec![actions],
            costs: vec![vec![0.0; states * actions]],
            kernel,
            discounts: vec![0.5],
            initial_dist: init,
        })
        .unwrap()
    }

    #[test]
    fn perturb_two_actions() {
        let p = DeterministicPolicy::new(0, 2, vec![0, 0]).unwrap();
        let r = p.perturb(0.1).unwrap();
        assert!((r.dist(0)[0] - 0.95).abs() < 1e-15);
        assert!((r.dist(0)[1] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn perturb_three_actions() {
        let p = DeterministicPolicy::new(0, 3, vec![1]).unwrap();
        let r = p.perturb(0.3).unwrap();
        let expected = [0.1, 0.8, 0.1];
        for (got, want) in r.dist(0).iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn perturb_rejects_endpoints() {
        let p = DeterministicPolicy::new(0, 2, vec![0]).unwrap();
        assert_eq!(p.perturb(0.0), Err(Error::InvalidRho(0.0)));
        assert_eq!(p.perturb(1.0), Err(Error::InvalidRho(1.0)));
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_joint_policies(&small_game(), DEFAULT_ENUMERATION_CAP).unwrap().len(), 16);
        assert_eq!(enumerate_joint_policies(&single_dm(1, 3), DEFAULT_ENUMERATION_CAP).unwrap().len(), 3);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let err = enumerate_joint_policies(&small_game(), 15).unwrap_err();
        assert_eq!(err, Error::CapExceeded { size: 16, cap: 15 });
    }

    #[test]
    fn enumeration_is_lexicographic_and_unique() {
        let game = small_game();
        let all = enumerate_joint_policies(&game, DEFAULT_ENUMERATION_CAP).unwrap();
        let space = PolicySpace::new(&game, DEFAULT_ENUMERATION_CAP).unwrap();
        let set: HashSet<_> = all.iter().cloned().collect();
        assert_eq!(set.len(), all.len());
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, all);
        for (id, joint) in all.iter().enumerate() {
            assert_eq!(space.joint_id(joint), id);
        }
        // DM 0 plays (0,1), DM 1 plays (1,0)
        assert_eq!(space.join(&[1, 2]), 6);
        assert_eq!(all[6].policy(0).actions(), &[0, 1]);
        assert_eq!(all[6].policy(1).actions(), &[1, 0]);
    }

    proptest! {
        #[test]
        fn perturb_sums_to_one(rho in 1e-9f64..(1.0 - 1e-9), n in 1usize..8, a in 0usize..8) {
            let a = a % n;
            let p = DeterministicPolicy::new(0, n, vec![a, 0]).unwrap();
            let r = p.perturb(rho).unwrap();
            for x in 0..2 {
                let s: f64 = r.dist(x).iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn opponent_index_roundtrip(id in 0usize..64, dm in 0usize..3) {
            let game = StochasticGame::new(GameParts {
                num_states: 2,
                action_counts: vec![2, 2, 1],
                costs: vec![vec![0.0; 8]; 3],
                kernel: vec![0.5; 16],
                discounts: vec![0.5; 3],
                initial_dist: vec![0.5, 0.5],
            }).unwrap();
            let space = PolicySpace::new(&game, 1000).unwrap();
            let id = id % space.joint_count();
            let opp = space.opponent_index(id, dm);
            prop_assert!(opp < space.opponent_count(dm));
            let rebuilt = space.replace(space.joint_from_opponents(dm, opp), dm, space.own_of(id, dm));
            prop_assert_eq!(rebuilt, id);
        }
    }
}
