//! Inertial reply processes driven by exact reply sets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replies::ReplyTable;

/// Per-DM inertia, each strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaParams {
    lambdas: Vec<f64>,
}

impl InertiaParams {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if let Some(bad) = lambdas.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(Error::InvalidParameter(format!("inertia must lie in (0, 1), got {bad}")));
        }
        Ok(Self { lambdas })
    }

    pub fn uniform(num_dms: usize, lambda: f64) -> Result<Self> {
        Self::new(vec![lambda; num_dms])
    }

    pub fn lambda(&self, dm: usize) -> f64 {
        self.lambdas[dm]
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

/// Source of the uniform draws behind a policy update.
///
/// Each DM that is not already replying optimally needs an inertia draw and,
/// if it moves, a selection draw. Drawing them lazily from an RNG or reading
/// them from a pre-drawn table makes two processes share randomness.
pub trait DecisionSource {
    fn inertia(&mut self, dm: usize) -> f64;
    fn select(&mut self, dm: usize) -> f64;
}

impl<R: Rng> DecisionSource for R {
    fn inertia(&mut self, _dm: usize) -> f64 {
        self.random()
    }

    fn select(&mut self, _dm: usize) -> f64 {
        self.random()
    }
}

/// One `(inertia, select)` pair per DM, drawn up front.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDraws {
    pairs: Vec<(f64, f64)>,
}

impl PhaseDraws {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, num_dms: usize) -> Self {
        Self {
            pairs: (0..num_dms).map(|_| (rng.random(), rng.random())).collect(),
        }
    }

    pub fn from_pairs(pairs: Vec<(f64, f64)>) -> Self {
        Self { pairs }
    }
}

impl DecisionSource for PhaseDraws {
    fn inertia(&mut self, dm: usize) -> f64 {
        self.pairs[dm].0
    }

    fn select(&mut self, dm: usize) -> f64 {
        self.pairs[dm].1
    }
}

/// Uniform pick from a nonempty list with one draw in `[0, 1)`.
#[inline]
pub fn pick<T: Copy>(items: &[T], u: f64) -> T {
    items[((u * items.len() as f64) as usize).min(items.len() - 1)]
}

/// The inertial rule shared by the exact process and the learners. Keeps
/// `current` without consuming draws if it is a candidate; otherwise keeps
/// it with probability `lambda` and else picks a candidate uniformly.
pub fn inertial_choice<S: DecisionSource + ?Sized>(
    current: usize,
    candidates: &[usize],
    lambda: f64,
    dm: usize,
    src: &mut S,
) -> usize {
    if candidates.is_empty() || candidates.binary_search(&current).is_ok() {
        return current;
    }
    if src.inertia(dm) < lambda {
        return current;
    }
    pick(candidates, src.select(dm))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next: usize,
    /// DMs whose policy changed.
    pub updated: Vec<usize>,
}

fn step<S: DecisionSource + ?Sized>(
    table: &ReplyTable,
    id: usize,
    params: &InertiaParams,
    src: &mut S,
    candidates: impl Fn(usize) -> Vec<usize>,
) -> StepOutcome {
    let space = table.space();
    let mut next = id;
    let mut updated = Vec::new();
    for dm in 0..table.num_dms() {
        let current = space.own_of(id, dm);
        let chosen = inertial_choice(current, &candidates(dm), params.lambda(dm), dm, src);
        if chosen != current {
            next = space.replace(next, dm, chosen);
            updated.push(dm);
        }
    }
    StepOutcome { next, updated }
}

/// One simultaneous step of the best reply process with inertia.
pub fn best_reply_step<S: DecisionSource + ?Sized>(
    table: &ReplyTable,
    id: usize,
    params: &InertiaParams,
    src: &mut S,
) -> StepOutcome {
    step(table, id, params, src, |dm| table.best_replies(id, dm).to_vec())
}

/// One simultaneous step of the strict better reply process with inertia.
pub fn better_reply_step<S: DecisionSource + ?Sized>(
    table: &ReplyTable,
    id: usize,
    params: &InertiaParams,
    src: &mut S,
) -> StepOutcome {
    step(table, id, params, src, |dm| table.strict_better_replies(id, dm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplyKind {
    Best,
    Better,
}

/// `policies[k]` is the joint policy ID after `k` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTrajectory {
    pub policies: Vec<usize>,
    pub at_equilibrium: Vec<bool>,
    /// `updated[k]` lists the DMs that moved between step `k` and `k + 1`.
    pub updated: Vec<Vec<usize>>,
}

impl PolicyTrajectory {
    pub fn fraction_at_equilibrium(&self) -> f64 {
        self.at_equilibrium.iter().filter(|&&b| b).count() as f64 / self.at_equilibrium.len() as f64
    }

    /// First step at which the trajectory sits at an equilibrium.
    pub fn absorption_step(&self) -> Option<usize> {
        self.at_equilibrium.iter().position(|&b| b)
    }
}

pub fn run_reply_process<S: DecisionSource + ?Sized>(
    table: &ReplyTable,
    kind: ReplyKind,
    start: usize,
    steps: usize,
    params: &InertiaParams,
    src: &mut S,
) -> Result<PolicyTrajectory> {
    if start >= table.joint_count() {
        return Err(Error::InvalidParameter(format!(
            "start policy {start} out of range ({} joint policies)",
            table.joint_count()
        )));
    }
    if params.len() != table.num_dms() {
        return Err(Error::Shape(format!("expected {} inertia values, got {}", table.num_dms(), params.len())));
    }
    let mut policies = vec![start];
    let mut at_equilibrium = vec![table.is_equilibrium(start)];
    let mut updated = Vec::with_capacity(steps);
    let mut id = start;
    for _ in 0..steps {
        let out = match kind {
            ReplyKind::Best => best_reply_step(table, id, params, src),
            ReplyKind::Better => better_reply_step(table, id, params, src),
        };
        id = out.next;
        policies.push(id);
        at_equilibrium.push(table.is_equilibrium(id));
        updated.push(out.updated);
    }
    Ok(PolicyTrajectory {
        policies,
        at_equilibrium,
        updated,
    })
}

/// Best reply process with inertia, seeded.
pub fn run_best_reply_process(
    table: &ReplyTable,
    start: usize,
    steps: usize,
    params: &InertiaParams,
    seed: u64,
) -> Result<PolicyTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_reply_process(table, ReplyKind::Best, start, steps, params, &mut rng)
}
