//! Exact reply information for every deterministic opponent profile.
//!
//! Graph construction, the inertial reply processes and the coupled learner
//! all ask the same questions ("is this a best reply", "which own policies
//! strictly improve") many times, so the answers are computed once here.

use rayon::prelude::*;

use crate::error::Result;
use crate::game::StochasticGame;
use crate::policy::{DeterministicPolicy, PolicySpace};
use crate::solver::{argmin_policy_indices, strictly_dominates, InducedMdp, QTable, SolverConfig};

#[derive(Debug, Clone)]
struct Entry {
    q_star: QTable,
    best: Vec<usize>,
    /// `values[own]` is the cost-to-go of own policy `own`.
    values: Vec<Vec<f64>>,
}

/// Cached best replies, optimal Q-factors and policy values, indexed by
/// DM and opponent profile.
#[derive(Debug, Clone)]
pub struct ReplyTable {
    space: PolicySpace,
    cfg: SolverConfig,
    entries: Vec<Vec<Entry>>,
}

impl ReplyTable {
    pub fn new(game: &StochasticGame, cfg: &SolverConfig) -> Result<Self> {
        let space = PolicySpace::new(game, cfg.cap)?;
        let mut entries = Vec::with_capacity(game.num_dms());
        for dm in 0..game.num_dms() {
            let per_dm: Result<Vec<Entry>> = (0..space.opponent_count(dm))
                .into_par_iter()
                .map(|opp| {
                    let id = space.joint_from_opponents(dm, opp);
                    let opps = space.joint_policy(id).opponents(dm);
                    let mdp = InducedMdp::new(game, dm, &opps)?;
                    let q_star = mdp.optimal_q(cfg.tol)?;
                    let best = argmin_policy_indices(&q_star, cfg.tie_tol);
                    let values = (0..space.own_count(dm))
                        .map(|own| mdp.evaluate_deterministic(&space.own_policy(dm, own)))
                        .collect::<Result<_>>()?;
                    Ok(Entry { q_star, best, values })
                })
                .collect();
            entries.push(per_dm?);
        }
        Ok(Self {
            space,
            cfg: *cfg,
            entries,
        })
    }

    pub fn space(&self) -> &PolicySpace {
        &self.space
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn num_dms(&self) -> usize {
        self.entries.len()
    }

    pub fn joint_count(&self) -> usize {
        self.space.joint_count()
    }

    fn entry(&self, id: usize, dm: usize) -> &Entry {
        &self.entries[dm][self.space.opponent_index(id, dm)]
    }

    /// Own-policy indices of `dm`'s best replies to the opponents in `id`, ascending.
    pub fn best_replies(&self, id: usize, dm: usize) -> &[usize] {
        &self.entry(id, dm).best
    }

    pub fn best_reply_policies(&self, id: usize, dm: usize) -> Vec<DeterministicPolicy> {
        self.best_replies(id, dm)
            .iter()
            .map(|&own| self.space.own_policy(dm, own))
            .collect()
    }

    /// Optimal Q-factors of `dm` against the opponents in `id`.
    pub fn exact_q(&self, id: usize, dm: usize) -> &QTable {
        &self.entry(id, dm).q_star
    }

    /// Cost-to-go of `dm` under joint policy `id`.
    pub fn value(&self, id: usize, dm: usize) -> &[f64] {
        &self.entry(id, dm).values[self.space.own_of(id, dm)]
    }

    /// Cost-to-go of `dm` if it switched to `own` while the others stay as in `id`.
    pub fn value_of(&self, id: usize, dm: usize, own: usize) -> &[f64] {
        &self.entry(id, dm).values[own]
    }

    pub fn is_best_reply(&self, id: usize, dm: usize) -> bool {
        self.best_replies(id, dm)
            .binary_search(&self.space.own_of(id, dm))
            .is_ok()
    }

    pub fn is_equilibrium(&self, id: usize) -> bool {
        (0..self.num_dms()).all(|dm| self.is_best_reply(id, dm))
    }

    pub fn equilibria(&self) -> Vec<usize> {
        (0..self.joint_count()).filter(|&id| self.is_equilibrium(id)).collect()
    }

    /// Best replies that strictly improve on `dm`'s current policy, ascending.
    pub fn strict_best_replies(&self, id: usize, dm: usize) -> Vec<usize> {
        let e = self.entry(id, dm);
        let current = &e.values[self.space.own_of(id, dm)];
        e.best
            .iter()
            .copied()
            .filter(|&own| strictly_dominates(&e.values[own], current, self.cfg.tie_tol))
            .collect()
    }

    /// All own policies that strictly improve on `dm`'s current policy, ascending.
    pub fn strict_better_replies(&self, id: usize, dm: usize) -> Vec<usize> {
        let e = self.entry(id, dm);
        let current = &e.values[self.space.own_of(id, dm)];
        (0..e.values.len())
            .filter(|&own| strictly_dominates(&e.values[own], current, self.cfg.tie_tol))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_game;

    #[test]
    fn strict_best_replies_are_best_and_better() {
        for seed in 0..20 {
            let game = random_game(2, 2, 2, seed);
            let table = ReplyTable::new(&game, &SolverConfig::default()).unwrap();
            for id in 0..table.joint_count() {
                for dm in 0..2 {
                    let better = table.strict_better_replies(id, dm);
                    for b in table.strict_best_replies(id, dm) {
                        assert!(table.best_replies(id, dm).contains(&b));
                        assert!(better.contains(&b));
                    }
                    // no strict best reply exactly when the current policy is a best reply
                    assert_eq!(table.strict_best_replies(id, dm).is_empty(), table.is_best_reply(id, dm));
                    assert_eq!(better.is_empty(), table.is_best_reply(id, dm));
                }
            }
        }
    }
}
