//! Exact discounted values, Q-factors and reply sets.
//!
//! Once the other DMs' stationary policies are fixed, DM `i` faces an
//! ordinary MDP whose costs and transitions are expectations over the
//! opponents' product distribution. [`InducedMdp`] materializes that MDP;
//! every operator here works on it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::StochasticGame;
use crate::policy::{DeterministicPolicy, PolicySpace, RandomizedPolicy, DEFAULT_ENUMERATION_CAP};

/// Tie tolerance for argmin sets and strict improvements.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Safety net for value iteration; geometric convergence ends far earlier.
const MAX_SWEEPS: usize = 1_000_000;

/// Numerical settings shared by the exact solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Sup-norm accuracy of value-iterated Q-factors.
    pub tol: f64,
    /// Entries within this distance count as tied.
    pub tie_tol: f64,
    /// Cap on enumerated policies.
    pub cap: u128,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            tie_tol: DEFAULT_TIE_TOL,
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

/// Q-factors of one DM over `(state, own action)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    dm: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(dm: usize, num_states: usize, num_actions: usize) -> Self {
        Self::filled(dm, num_states, num_actions, 0.0)
    }

    pub fn filled(dm: usize, num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            dm,
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_values(dm: usize, num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::Shape(format!(
                "Q-table needs {} entries, got {}",
                num_states * num_actions,
                values.len()
            )));
        }
        Ok(Self {
            dm,
            num_states,
            num_actions,
            values,
        })
    }

    pub fn dm(&self) -> usize {
        self.dm
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, x: usize, u: usize) -> f64 {
        self.values[x * self.num_actions + u]
    }

    #[inline]
    pub fn set(&mut self, x: usize, u: usize, value: f64) {
        self.values[x * self.num_actions + u] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn values_mut_vec(&mut self) -> &mut Vec<f64> {
        &mut self.values
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.num_actions..(x + 1) * self.num_actions]
    }

    #[inline]
    pub fn min_at(&self, x: usize) -> f64 {
        self.row(x).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Actions within `slack` of the row minimum, ascending.
    pub fn near_argmin(&self, x: usize, slack: f64) -> Vec<usize> {
        let min = self.min_at(x);
        self.row(x)
            .iter()
            .enumerate()
            .filter(|(_, &q)| q <= min + slack)
            .map(|(u, _)| u)
            .collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Coordinatewise projection onto `[-bound, bound]`.
    pub fn clamp(&mut self, bound: f64) {
        for v in &mut self.values {
            *v = v.clamp(-bound, bound);
        }
    }

    /// A greedy policy, lowest action index on ties.
    pub fn greedy(&self) -> DeterministicPolicy {
        let actions = (0..self.num_states)
            .map(|x| self.near_argmin(x, 0.0)[0])
            .collect();
        DeterministicPolicy::new(self.dm, self.num_actions, actions)
            .expect("argmin lies in the action set")
    }
}

/// Discounted cost-to-go `J_x` of one DM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueVector {
    pub dm: usize,
    pub values: Vec<f64>,
}

/// The MDP faced by one DM when all other DMs use fixed stationary policies.
#[derive(Debug, Clone)]
pub struct InducedMdp {
    dm: usize,
    num_states: usize,
    num_actions: usize,
    beta: f64,
    /// `cost[x * num_actions + u]`
    cost: Vec<f64>,
    /// `trans[(x * num_actions + u) * num_states + x']`
    trans: Vec<f64>,
}

impl InducedMdp {
    /// `opponents` holds exactly one policy for every DM other than `dm`.
    pub fn new(game: &StochasticGame, dm: usize, opponents: &[RandomizedPolicy]) -> Result<Self> {
        game.check_dm(dm)?;
        let n_dms = game.num_dms();
        let ns = game.num_states();
        let mut by_dm: Vec<Option<&RandomizedPolicy>> = vec![None; n_dms];
        for p in opponents {
            if p.dm() >= n_dms || p.dm() == dm || by_dm[p.dm()].is_some() {
                return Err(Error::Shape(format!(
                    "unexpected opponent policy for DM {} (solving for DM {dm})",
                    p.dm()
                )));
            }
            if p.num_states() != ns || p.num_actions() != game.num_actions(p.dm()) {
                return Err(Error::Shape(format!("opponent policy of DM {} has wrong dimensions", p.dm())));
            }
            by_dm[p.dm()] = Some(p);
        }
        if opponents.len() != n_dms - 1 {
            return Err(Error::Shape(format!(
                "expected {} opponent policies, got {}",
                n_dms - 1,
                opponents.len()
            )));
        }
        let na = game.num_actions(dm);
        let mut cost = vec![0.0; ns * na];
        let mut trans = vec![0.0; ns * na * ns];
        for x in 0..ns {
            for joint in 0..game.joint_count() {
                let mut prob = 1.0;
                for (j, p) in by_dm.iter().enumerate() {
                    if let Some(p) = p {
                        prob *= p.dist(x)[game.action_of(joint, j)];
                    }
                }
                if prob == 0.0 {
                    continue;
                }
                let u = game.action_of(joint, dm);
                let row = x * na + u;
                cost[row] += prob * game.cost(dm, x, joint);
                for (slot, p) in trans[row * ns..(row + 1) * ns]
                    .iter_mut()
                    .zip(game.kernel_row(x, joint))
                {
                    *slot += prob * p;
                }
            }
        }
        Ok(Self {
            dm,
            num_states: ns,
            num_actions: na,
            beta: game.discount(dm),
            cost,
            trans,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn expected_cost(&self, x: usize, u: usize) -> f64 {
        self.cost[x * self.num_actions + u]
    }

    fn check(&self, q: &QTable) -> Result<()> {
        if q.num_states != self.num_states || q.num_actions != self.num_actions {
            return Err(Error::Shape(format!(
                "Q-table is {}x{}, expected {}x{}",
                q.num_states, q.num_actions, self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    fn backup_with(&self, cont: &[f64], out: &mut QTable) {
        let ns = self.num_states;
        for row in 0..ns * self.num_actions {
            let expected: f64 = self.trans[row * ns..(row + 1) * ns]
                .iter()
                .zip(cont)
                .map(|(p, v)| p * v)
                .sum();
            out.values[row] = self.cost[row] + self.beta * expected;
        }
    }

    /// One application of the optimal Bellman operator.
    pub fn optimal_backup(&self, q: &QTable) -> Result<QTable> {
        self.check(q)?;
        let cont: Vec<f64> = (0..self.num_states).map(|x| q.min_at(x)).collect();
        let mut out = QTable::zeros(self.dm, self.num_states, self.num_actions);
        self.backup_with(&cont, &mut out);
        Ok(out)
    }

    /// One application of the operator whose continuation follows `policy`.
    pub fn policy_backup(&self, q: &QTable, policy: &DeterministicPolicy) -> Result<QTable> {
        self.check(q)?;
        self.check_policy(policy)?;
        let cont: Vec<f64> = (0..self.num_states).map(|x| q.get(x, policy.action(x))).collect();
        let mut out = QTable::zeros(self.dm, self.num_states, self.num_actions);
        self.backup_with(&cont, &mut out);
        Ok(out)
    }

    fn check_policy(&self, policy: &DeterministicPolicy) -> Result<()> {
        if policy.actions().len() != self.num_states || policy.num_actions() != self.num_actions {
            return Err(Error::Shape("policy does not match the DM's state/action sets".into()));
        }
        Ok(())
    }

    /// Value iteration from zero until the sup-change certifies `tol` accuracy.
    fn iterate(&self, tol: f64, policy: Option<&DeterministicPolicy>) -> Result<QTable> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
        }
        let mut q = QTable::zeros(self.dm, self.num_states, self.num_actions);
        let mut next = q.clone();
        let mut cont = vec![0.0; self.num_states];
        let threshold = if self.beta > 0.0 {
            tol * (1.0 - self.beta) / (2.0 * self.beta)
        } else {
            f64::INFINITY
        };
        for _ in 0..MAX_SWEEPS {
            for (x, c) in cont.iter_mut().enumerate() {
                *c = match policy {
                    Some(p) => q.get(x, p.action(x)),
                    None => q.min_at(x),
                };
            }
            self.backup_with(&cont, &mut next);
            let change = next.sup_distance(&q);
            std::mem::swap(&mut q, &mut next);
            if change <= threshold {
                break;
            }
        }
        Ok(q)
    }

    /// Fixed point of the optimal operator, within `tol` in sup norm.
    pub fn optimal_q(&self, tol: f64) -> Result<QTable> {
        self.iterate(tol, None)
    }

    /// Fixed point of the policy-constrained operator, within `tol`.
    pub fn policy_q(&self, policy: &DeterministicPolicy, tol: f64) -> Result<QTable> {
        self.check_policy(policy)?;
        self.iterate(tol, Some(policy))
    }

    /// Exact cost-to-go of an own randomized policy via a linear solve.
    pub fn evaluate(&self, own: &RandomizedPolicy) -> Result<Vec<f64>> {
        if own.num_states() != self.num_states || own.num_actions() != self.num_actions {
            return Err(Error::Shape("own policy does not match the DM's state/action sets".into()));
        }
        let ns = self.num_states;
        let mut a = DMatrix::<f64>::identity(ns, ns);
        let mut b = DVector::<f64>::zeros(ns);
        for x in 0..ns {
            for (u, &w) in own.dist(x).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let row = x * self.num_actions + u;
                b[x] += w * self.cost[row];
                for next in 0..ns {
                    a[(x, next)] -= self.beta * w * self.trans[row * ns + next];
                }
            }
        }
        let sol = a
            .lu()
            .solve(&b)
            .expect("I - beta P is invertible for beta < 1");
        Ok(sol.iter().copied().collect())
    }

    /// Exact cost-to-go of an own deterministic policy.
    pub fn evaluate_deterministic(&self, own: &DeterministicPolicy) -> Result<Vec<f64>> {
        self.check_policy(own)?;
        self.evaluate(&own.to_randomized())
    }
}

/// `F(q)(x,u) = E[c + beta * sum_x' P(x'|x,u) min_v q(x',v)]` under the opponents' policies.
pub fn bellman_optimal_operator(
    game: &StochasticGame,
    dm: usize,
    opponents: &[RandomizedPolicy],
    q: &QTable,
) -> Result<QTable> {
    InducedMdp::new(game, dm, opponents)?.optimal_backup(q)
}

/// Optimal Q-factors of `dm` against fixed opponents, within `tol`.
pub fn optimal_q_factors(
    game: &StochasticGame,
    dm: usize,
    opponents: &[RandomizedPolicy],
    tol: f64,
) -> Result<QTable> {
    InducedMdp::new(game, dm, opponents)?.optimal_q(tol)
}

/// Q-factors of `dm` when it follows `own` after the first step, within `tol`.
pub fn policy_q_factors(
    game: &StochasticGame,
    dm: usize,
    own: &DeterministicPolicy,
    opponents: &[RandomizedPolicy],
    tol: f64,
) -> Result<QTable> {
    InducedMdp::new(game, dm, opponents)?.policy_q(own, tol)
}

/// Discounted cost of `dm` under a full tuple of randomized policies (one per DM, in DM order).
pub fn policy_value(game: &StochasticGame, dm: usize, joint: &[RandomizedPolicy]) -> Result<ValueVector> {
    if joint.len() != game.num_dms() || joint.iter().enumerate().any(|(j, p)| p.dm() != j) {
        return Err(Error::Shape("joint policy must list one policy per DM in order".into()));
    }
    let opponents: Vec<RandomizedPolicy> = joint.iter().filter(|p| p.dm() != dm).cloned().collect();
    let mdp = InducedMdp::new(game, dm, &opponents)?;
    Ok(ValueVector {
        dm,
        values: mdp.evaluate(&joint[dm])?,
    })
}

/// Own-policy indices (lexicographic, ascending) of every combination of
/// per-state action sets.
pub fn product_indices(per_state: &[Vec<usize>], num_actions: usize) -> Vec<usize> {
    let mut out = vec![0usize];
    for set in per_state {
        let mut next = Vec::with_capacity(out.len() * set.len());
        for &prefix in &out {
            for &a in set {
                next.push(prefix * num_actions + a);
            }
        }
        out = next;
    }
    out
}

/// Own-policy indices of the best replies read off a Q-table.
pub fn argmin_policy_indices(q: &QTable, slack: f64) -> Vec<usize> {
    let sets: Vec<Vec<usize>> = (0..q.num_states()).map(|x| q.near_argmin(x, slack)).collect();
    product_indices(&sets, q.num_actions())
}

fn own_policies_from_indices(num_actions: usize, dm: usize, num_states: usize, idx: &[usize]) -> Vec<DeterministicPolicy> {
    idx.iter()
        .map(|&i| DeterministicPolicy::from_index(dm, num_actions, num_states, i))
        .collect()
}

/// Deterministic best replies of `dm` to `opponents`, in lexicographic order.
pub fn best_reply_set(
    game: &StochasticGame,
    dm: usize,
    opponents: &[RandomizedPolicy],
    cfg: &SolverConfig,
) -> Result<Vec<DeterministicPolicy>> {
    let q = optimal_q_factors(game, dm, opponents, cfg.tol)?;
    let idx = argmin_policy_indices(&q, cfg.tie_tol);
    Ok(own_policies_from_indices(game.num_actions(dm), dm, game.num_states(), &idx))
}

/// `a <= b` everywhere and `a < b` somewhere, with tolerance.
pub fn strictly_dominates(a: &[f64], b: &[f64], tie_tol: f64) -> bool {
    let weak = a.iter().zip(b).all(|(x, y)| *x <= y + tie_tol);
    weak && a.iter().zip(b).any(|(x, y)| *x < y - tie_tol)
}

fn own_count(game: &StochasticGame, dm: usize, cap: u128) -> Result<usize> {
    let mut count: u128 = 1;
    for _ in 0..game.num_states() {
        count = count.saturating_mul(game.num_actions(dm) as u128);
        if count > cap {
            return Err(Error::CapExceeded { size: count, cap });
        }
    }
    Ok(count as usize)
}

/// Deterministic policies of `dm` that strictly improve on its current policy in `joint`.
pub fn strict_better_reply_set(
    game: &StochasticGame,
    dm: usize,
    joint: &crate::policy::JointPolicy,
    cfg: &SolverConfig,
) -> Result<Vec<DeterministicPolicy>> {
    game.check_dm(dm)?;
    let mdp = InducedMdp::new(game, dm, &joint.opponents(dm))?;
    let current = mdp.evaluate_deterministic(joint.policy(dm))?;
    let count = own_count(game, dm, cfg.cap)?;
    let all: Vec<usize> = (0..count).collect();
    let mut out = Vec::new();
    for p in own_policies_from_indices(game.num_actions(dm), dm, game.num_states(), &all) {
        let values = mdp.evaluate_deterministic(&p)?;
        if strictly_dominates(&values, &current, cfg.tie_tol) {
            out.push(p);
        }
    }
    Ok(out)
}

/// True iff `candidate` is a best reply to the others in `joint` and strictly
/// improves on `joint`'s own policy at some state.
pub fn is_strict_best_reply(
    game: &StochasticGame,
    dm: usize,
    candidate: &DeterministicPolicy,
    joint: &crate::policy::JointPolicy,
    cfg: &SolverConfig,
) -> Result<bool> {
    let opponents = joint.opponents(dm);
    if !best_reply_set(game, dm, &opponents, cfg)?.contains(candidate) {
        return Ok(false);
    }
    let mdp = InducedMdp::new(game, dm, &opponents)?;
    let cand = mdp.evaluate_deterministic(candidate)?;
    let current = mdp.evaluate_deterministic(joint.policy(dm))?;
    Ok(cand.iter().zip(&current).any(|(a, b)| *a < b - cfg.tie_tol))
}

/// Minimum Q-factor separations and the matching experimentation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationConstants {
    /// Smallest gap between distinct optimal Q-factor entries (`+inf` if none).
    pub delta_bar: f64,
    /// Smallest gap between distinct policy-constrained values (`+inf` if none).
    pub delta_check: f64,
    /// Experimentation bound checked with tolerances at `delta_bar / 2`.
    pub rho_bar: f64,
    /// Experimentation bound checked with tolerances at `delta_check / 2`.
    pub rho_check: f64,
}

/// Deterministic opponent profiles of `dm`, as randomized point masses.
fn deterministic_opponents(space: &PolicySpace, dm: usize, opp: usize) -> Vec<crate::policy::DeterministicPolicy> {
    let joint = space.joint_policy(space.joint_from_opponents(dm, opp));
    joint
        .policies()
        .iter()
        .filter(|p| p.dm() != dm)
        .cloned()
        .collect()
}

fn lift(ps: &[DeterministicPolicy]) -> Vec<RandomizedPolicy> {
    ps.iter().map(DeterministicPolicy::to_randomized).collect()
}

fn perturbed(ps: &[DeterministicPolicy], rho: f64) -> Result<Vec<RandomizedPolicy>> {
    ps.iter().map(|p| p.perturb(rho)).collect()
}

/// `delta_bar` over optimal Q-factors.
pub fn delta_bar(game: &StochasticGame, tol: f64, cap: u128) -> Result<f64> {
    let space = PolicySpace::new(game, cap)?;
    let guard = 10.0 * tol;
    let mut best = f64::INFINITY;
    for dm in 0..game.num_dms() {
        for opp in 0..space.opponent_count(dm) {
            let opps = lift(&deterministic_opponents(&space, dm, opp));
            let q = optimal_q_factors(game, dm, &opps, tol)?;
            for x in 0..game.num_states() {
                let row = q.row(x);
                for (a, qa) in row.iter().enumerate() {
                    for qb in &row[a + 1..] {
                        let gap = (qa - qb).abs();
                        if gap > guard {
                            best = best.min(gap);
                        }
                    }
                }
            }
        }
    }
    Ok(best)
}

/// `delta_check` over policy-constrained Q-factors at `(x, pi(x))`.
pub fn delta_check(game: &StochasticGame, tol: f64, cap: u128) -> Result<f64> {
    let space = PolicySpace::new(game, cap)?;
    let guard = 10.0 * tol;
    let mut best = f64::INFINITY;
    for dm in 0..game.num_dms() {
        for opp in 0..space.opponent_count(dm) {
            let opps = lift(&deterministic_opponents(&space, dm, opp));
            let mdp = InducedMdp::new(game, dm, &opps)?;
            let mut on_policy = Vec::with_capacity(space.own_count(dm));
            for own in 0..space.own_count(dm) {
                let p = space.own_policy(dm, own);
                let q = mdp.policy_q(&p, tol)?;
                on_policy.push((0..game.num_states()).map(|x| q.get(x, p.action(x))).collect::<Vec<_>>());
            }
            for (a, va) in on_policy.iter().enumerate() {
                for vb in &on_policy[a + 1..] {
                    for (qa, qb) in va.iter().zip(vb) {
                        let gap = (qa - qb).abs();
                        if gap > guard {
                            best = best.min(gap);
                        }
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Which Q-factors an experimentation bound is verified on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Optimal Q-factors against `pi^{-i}` vs. perturbed `pi^{-i}`; checked against `delta_bar`.
    Optimal,
    /// Policy-constrained Q-factors for every own policy; checked against `delta_check`.
    PolicyConstrained,
}

const RHO_GRID: usize = 1000;

/// Largest common experimentation probability on a 1e-3 grid for which the
/// perturbation of opponents moves every relevant Q-table by less than
/// `min(delta^i, delta_sep - delta^i) / 2`. Returns 0 if no grid point passes.
pub fn experimentation_bound(
    game: &StochasticGame,
    deltas: &[f64],
    kind: BoundKind,
    tol: f64,
    cap: u128,
) -> Result<f64> {
    if deltas.len() != game.num_dms() {
        return Err(Error::Shape(format!("expected {} tolerances, got {}", game.num_dms(), deltas.len())));
    }
    let sep = match kind {
        BoundKind::Optimal => delta_bar(game, tol, cap)?,
        BoundKind::PolicyConstrained => delta_check(game, tol, cap)?,
    };
    for (dm, &d) in deltas.iter().enumerate() {
        if !(d > 0.0 && d < sep) {
            return Err(Error::Precondition(format!(
                "tolerance of DM {dm} is {d}, must lie in (0, {sep})"
            )));
        }
    }
    let space = PolicySpace::new(game, cap)?;
    // Baseline tables do not depend on rho.
    let mut cases = Vec::new();
    for dm in 0..game.num_dms() {
        let margin = 0.5 * deltas[dm].min(sep - deltas[dm]);
        for opp in 0..space.opponent_count(dm) {
            let det = deterministic_opponents(&space, dm, opp);
            let mdp = InducedMdp::new(game, dm, &lift(&det))?;
            match kind {
                BoundKind::Optimal => {
                    cases.push((dm, margin, det, None, mdp.optimal_q(tol)?));
                }
                BoundKind::PolicyConstrained => {
                    for own in 0..space.own_count(dm) {
                        let p = space.own_policy(dm, own);
                        let q = mdp.policy_q(&p, tol)?;
                        cases.push((dm, margin, det.clone(), Some(p), q));
                    }
                }
            }
        }
    }
    let holds = |k: usize| -> Result<bool> {
        let rho = k as f64 / RHO_GRID as f64;
        for (dm, margin, det, own, base) in &cases {
            let mdp = InducedMdp::new(game, *dm, &perturbed(det, rho)?)?;
            let q = match own {
                None => mdp.optimal_q(tol)?,
                Some(p) => mdp.policy_q(p, tol)?,
            };
            if !(q.sup_distance(base) < *margin) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    // Largest passing grid point, by bisection on [lo passes, hi fails].
    let (mut lo, mut hi) = (0usize, RHO_GRID);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo as f64 / RHO_GRID as f64)
}

/// Both separations, and experimentation bounds evaluated with every DM's
/// tolerance at the midpoint of its admissible range. A separation of `+inf`
/// leaves the experimentation rate unconstrained (bound reported as 1).
pub fn separation_constants(game: &StochasticGame, tol: f64, cap: u128) -> Result<SeparationConstants> {
    let delta_bar = delta_bar(game, tol, cap)?;
    let delta_check = delta_check(game, tol, cap)?;
    let bound = |sep: f64, kind| -> Result<f64> {
        if sep.is_finite() {
            experimentation_bound(game, &vec![sep / 2.0; game.num_dms()], kind, tol, cap)
        } else {
            Ok(1.0)
        }
    };
    Ok(SeparationConstants {
        delta_bar,
        delta_check,
        rho_bar: bound(delta_bar, BoundKind::Optimal)?,
        rho_check: bound(delta_check, BoundKind::PolicyConstrained)?,
    })
}
