//! Finite discounted stochastic games.
//!
//! States, actions and DMs are dense zero-based indices. A joint action is
//! stored as a single mixed-radix index with DM 0 as the most significant
//! digit, so the cost and kernel tables are flat vectors.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance used when checking that probability vectors sum to one.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A finite discounted stochastic game with `N` decision makers.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame {
    num_states: usize,
    action_counts: Vec<usize>,
    strides: Vec<usize>,
    joint_count: usize,
    /// `costs[dm][x * joint_count + a]`
    costs: Vec<Vec<f64>>,
    /// `kernel[(x * joint_count + a) * num_states + x']`
    kernel: Vec<f64>,
    discounts: Vec<f64>,
    initial_dist: Vec<f64>,
}

/// Everything needed to build a [`StochasticGame`], in flat row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GameParts {
    pub num_states: usize,
    pub action_counts: Vec<usize>,
    /// One flat table per DM, indexed `[x][u^1]..[u^N]`.
    pub costs: Vec<Vec<f64>>,
    /// Flat table indexed `[x][u^1]..[u^N][x']`.
    pub kernel: Vec<f64>,
    pub discounts: Vec<f64>,
    pub initial_dist: Vec<f64>,
}

impl StochasticGame {
    /// Builds a game, checking only that the tables have consistent shapes.
    /// Value invariants (row sums, discount ranges) are reported by
    /// [`StochasticGame::validate`].
    pub fn new(parts: GameParts) -> Result<Self> {
        let GameParts {
            num_states,
            action_counts,
            costs,
            kernel,
            discounts,
            initial_dist,
        } = parts;
        let num_dms = action_counts.len();
        if num_dms == 0 {
            return Err(Error::Shape("a game needs at least one DM".into()));
        }
        if num_states == 0 {
            return Err(Error::Shape("a game needs at least one state".into()));
        }
        if action_counts.contains(&0) {
            return Err(Error::Shape("every DM needs at least one action".into()));
        }
        let mut strides = vec![1; num_dms];
        for dm in (0..num_dms.saturating_sub(1)).rev() {
            strides[dm] = strides[dm + 1] * action_counts[dm + 1];
        }
        let joint_count = strides[0] * action_counts[0];
        if costs.len() != num_dms {
            return Err(Error::Shape(format!(
                "expected {num_dms} cost tables, got {}",
                costs.len()
            )));
        }
        for (dm, table) in costs.iter().enumerate() {
            if table.len() != num_states * joint_count {
                return Err(Error::Shape(format!(
                    "cost table of DM {dm} has {} entries, expected {}",
                    table.len(),
                    num_states * joint_count
                )));
            }
        }
        if kernel.len() != num_states * joint_count * num_states {
            return Err(Error::Shape(format!(
                "kernel has {} entries, expected {}",
                kernel.len(),
                num_states * joint_count * num_states
            )));
        }
        if discounts.len() != num_dms {
            return Err(Error::Shape(format!(
                "expected {num_dms} discount factors, got {}",
                discounts.len()
            )));
        }
        if initial_dist.len() != num_states {
            return Err(Error::Shape(format!(
                "initial distribution has {} entries, expected {num_states}",
                initial_dist.len()
            )));
        }
        Ok(Self {
            num_states,
            action_counts,
            strides,
            joint_count,
            costs,
            kernel,
            discounts,
            initial_dist,
        })
    }

    pub fn num_dms(&self) -> usize {
        self.action_counts.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn num_actions(&self, dm: usize) -> usize {
        self.action_counts[dm]
    }

    /// Number of joint actions `|U^1| * ... * |U^N|`.
    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn discount(&self, dm: usize) -> f64 {
        self.discounts[dm]
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Stride of DM `dm`'s digit inside a joint action index.
    pub fn stride(&self, dm: usize) -> usize {
        self.strides[dm]
    }

    pub fn joint_index(&self, actions: &[usize]) -> usize {
        actions
            .iter()
            .zip(&self.strides)
            .map(|(a, s)| a * s)
            .sum()
    }

    pub fn joint_actions(&self, mut joint: usize) -> Vec<usize> {
        let mut out = vec![0; self.num_dms()];
        for (dm, slot) in out.iter_mut().enumerate() {
            *slot = joint / self.strides[dm];
            joint %= self.strides[dm];
        }
        out
    }

    /// Action of `dm` inside joint action index `joint`.
    pub fn action_of(&self, joint: usize, dm: usize) -> usize {
        (joint / self.strides[dm]) % self.action_counts[dm]
    }

    pub fn check_state(&self, state: usize) -> Result<()> {
        if state < self.num_states {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                state,
                num_states: self.num_states,
            })
        }
    }

    pub fn check_dm(&self, dm: usize) -> Result<()> {
        if dm < self.num_dms() {
            Ok(())
        } else {
            Err(Error::DmOutOfRange {
                dm,
                num_dms: self.num_dms(),
            })
        }
    }

    pub fn check_joint_actions(&self, actions: &[usize]) -> Result<()> {
        if actions.len() != self.num_dms() {
            return Err(Error::Shape(format!(
                "joint action has {} entries, expected {}",
                actions.len(),
                self.num_dms()
            )));
        }
        for (dm, (&a, &n)) in actions.iter().zip(&self.action_counts).enumerate() {
            if a >= n {
                return Err(Error::ActionOutOfRange {
                    dm,
                    action: a,
                    num_actions: n,
                });
            }
        }
        Ok(())
    }

    /// Cost of `dm` at state `x` under joint action index `joint`.
    #[inline]
    pub fn cost(&self, dm: usize, x: usize, joint: usize) -> f64 {
        self.costs[dm][x * self.joint_count + joint]
    }

    /// Flat cost table of one DM, indexed `x * joint_count + joint`.
    pub fn cost_table(&self, dm: usize) -> &[f64] {
        &self.costs[dm]
    }

    /// Transition distribution over next states from `(x, joint)`.
    #[inline]
    pub fn kernel_row(&self, x: usize, joint: usize) -> &[f64] {
        let start = (x * self.joint_count + joint) * self.num_states;
        &self.kernel[start..start + self.num_states]
    }

    /// Largest absolute cost of `dm`.
    pub fn max_abs_cost(&self, dm: usize) -> f64 {
        self.costs[dm].iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Checks every value invariant and lists the violations.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (dm, &beta) in self.discounts.iter().enumerate() {
            if !(beta > 0.0 && beta < 1.0) {
                violations.push(Violation::Discount { dm, value: beta });
            }
        }
        for (dm, table) in self.costs.iter().enumerate() {
            for (idx, c) in table.iter().enumerate() {
                if !c.is_finite() {
                    violations.push(Violation::NonFiniteCost {
                        dm,
                        state: idx / self.joint_count,
                        joint: self.joint_actions(idx % self.joint_count),
                    });
                }
            }
        }
        for x in 0..self.num_states {
            for joint in 0..self.joint_count {
                let row = self.kernel_row(x, joint);
                let negative = row.iter().any(|p| !(*p >= 0.0) || !p.is_finite());
                let sum: f64 = row.iter().sum();
                if negative || (sum - 1.0).abs() > PROB_SUM_TOL {
                    violations.push(Violation::KernelRow {
                        state: x,
                        joint: self.joint_actions(joint),
                        sum,
                        negative,
                    });
                }
            }
        }
        let negative = self.initial_dist.iter().any(|p| !(*p >= 0.0));
        let sum: f64 = self.initial_dist.iter().sum();
        if negative || (sum - 1.0).abs() > PROB_SUM_TOL {
            violations.push(Violation::InitialDist { sum, negative });
        }
        ValidationReport { violations }
    }

    /// Picks the next state by inverse CDF over the fixed state order, given
    /// one uniform draw in `[0, 1)`.
    pub fn transition_for_draw(&self, x: usize, joint: usize, draw: f64) -> usize {
        let row = self.kernel_row(x, joint);
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (next, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_positive = next;
                if draw < acc {
                    return next;
                }
            }
        }
        // Rounding left the cumulative sum just under one.
        last_positive
    }

    /// Samples the next state, consuming exactly one uniform draw.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        x: usize,
        actions: &[usize],
        rng: &mut R,
    ) -> Result<usize> {
        self.check_state(x)?;
        self.check_joint_actions(actions)?;
        let joint = self.joint_index(actions);
        Ok(self.transition_for_draw(x, joint, rng.random::<f64>()))
    }

    /// Samples an initial state from `initial_dist`, consuming one draw.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let draw = rng.random::<f64>();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (x, &p) in self.initial_dist.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_positive = x;
                if draw < acc {
                    return x;
                }
            }
        }
        last_positive
    }

    /// True iff every state reaches every state (itself included) with
    /// positive probability under some open-loop joint-action sequence.
    pub fn reachability_check(&self) -> bool {
        let n = self.num_states;
        let mut succ = vec![Vec::new(); n];
        for (x, out) in succ.iter_mut().enumerate() {
            for next in 0..n {
                let reachable = (0..self.joint_count)
                    .any(|joint| self.kernel_row(x, joint)[next] > 0.0);
                if reachable {
                    out.push(next);
                }
            }
        }
        (0..n).all(|start| {
            let mut seen = vec![false; n];
            let mut queue: VecDeque<usize> = succ[start].iter().copied().collect();
            for &s in &succ[start] {
                seen[s] = true;
            }
            while let Some(x) = queue.pop_front() {
                for &next in &succ[x] {
                    if !seen[next] {
                        seen[next] = true;
                        queue.push_back(next);
                    }
                }
            }
            seen.iter().all(|&s| s)
        })
    }
}

/// One broken invariant of a [`StochasticGame`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Discount {
        dm: usize,
        value: f64,
    },
    NonFiniteCost {
        dm: usize,
        state: usize,
        joint: Vec<usize>,
    },
    KernelRow {
        state: usize,
        joint: Vec<usize>,
        sum: f64,
        negative: bool,
    },
    InitialDist {
        sum: f64,
        negative: bool,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Discount { dm, value } => {
                write!(f, "discount of DM {dm} is {value}, outside (0, 1)")
            }
            Violation::NonFiniteCost { dm, state, joint } => {
                write!(f, "cost of DM {dm} at state {state}, joint action {joint:?} is not finite")
            }
            Violation::KernelRow {
                state,
                joint,
                sum,
                negative,
            } => {
                if *negative {
                    write!(f, "kernel row at state {state}, joint action {joint:?} has a negative entry")
                } else {
                    write!(f, "kernel row at state {state}, joint action {joint:?} sums to {sum}")
                }
            }
            Violation::InitialDist { sum, negative } => {
                if *negative {
                    write!(f, "initial distribution has a negative entry")
                } else {
                    write!(f, "initial distribution sums to {sum}")
                }
            }
        }
    }
}

/// Result of [`StochasticGame::validate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}
