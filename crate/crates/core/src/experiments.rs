//! Benchmark games and the phase-length sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameParts, StochasticGame};
use crate::learning::{run_coupled, CoupledOptions, LearnerParams, PhaseSchedule, RunRecord};
use crate::replies::ReplyTable;
use crate::solver::SolverConfig;

/// Two-state prisoner's dilemma. Utilities `(C,C) -> c`, `(C,D) -> a`,
/// `(D,C) -> b`, `(D,D) -> 0` are negated into costs; mutual cooperation
/// steers the state toward state 0 with probability `1 - gamma`, anything
/// else toward state 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for PdParams {
    fn default() -> Self {
        Self {
            a: -1.0,
            b: 2.0,
            c: 1.0,
            gamma: 0.3,
            beta: 0.8,
        }
    }
}

pub fn build_pd_game(p: &PdParams) -> Result<StochasticGame> {
    if !(p.b > p.c && p.c > 0.0 && 0.0 > p.a) {
        return Err(Error::InvalidParameter(format!(
            "payoffs need b > c > 0 > a, got a={}, b={}, c={}",
            p.a, p.b, p.c
        )));
    }
    for (name, v) in [("gamma", p.gamma), ("beta", p.beta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    // utility[own][other], action 0 = cooperate
    let utility = [[p.c, p.a], [p.b, 0.0]];
    let mut costs = vec![Vec::new(), Vec::new()];
    let mut kernel = Vec::new();
    for _x in 0..2 {
        for u0 in 0..2 {
            for u1 in 0..2 {
                costs[0].push(-utility[u0][u1]);
                costs[1].push(-utility[u1][u0]);
                if u0 == 0 && u1 == 0 {
                    kernel.extend([1.0 - p.gamma, p.gamma]);
                } else {
                    kernel.extend([p.gamma, 1.0 - p.gamma]);
                }
            }
        }
    }
    StochasticGame::new(GameParts {
        num_states: 2,
        action_counts: vec![2, 2],
        costs,
        kernel,
        discounts: vec![p.beta; 2],
        initial_dist: vec![0.5, 0.5],
    })
}

/// Discount used for the single-stage three-DM game; any value in (0, 1) gives
/// the same reply structure.
pub const FIG7_DISCOUNT: f64 = 0.5;

/// Single-state game with three DMs: DM 0 picks a row (3), DM 1 a column (3),
/// DM 2 one of two cost matrices.
pub fn build_fig7_game(a: f64) -> Result<StochasticGame> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("a must be positive, got {a}")));
    }
    let z = 0.0;
    let m = -a;
    let cells: [[[(f64, f64, f64); 3]; 3]; 2] = [
        [
            [(m, z, z), (z, a, z), (z, m, m)],
            [(a, z, z), (m, m, z), (a, z, z)],
            [(z, m, m), (z, a, z), (m, z, m)],
        ],
        [
            [(z, m, m), (z, z, z), (z, z, z)],
            [(a, z, z), (m, z, m), (m, m, m)],
            [(m, m, z), (z, z, z), (z, z, z)],
        ],
    ];
    let mut costs = vec![Vec::new(), Vec::new(), Vec::new()];
    for row in 0..3 {
        for col in 0..3 {
            for mat in cells.iter() {
                let (c0, c1, c2) = mat[row][col];
                costs[0].push(c0);
                costs[1].push(c1);
                costs[2].push(c2);
            }
        }
    }
    StochasticGame::new(GameParts {
        num_states: 1,
        action_counts: vec![3, 3, 2],
        costs,
        kernel: vec![1.0; 18],
        discounts: vec![FIG7_DISCOUNT; 3],
        initial_dist: vec![1.0],
    })
}

/// Discount shared by the DMs of [`random_team_game`].
pub const TEAM_DISCOUNT: f64 = 0.8;

/// Random team game: one cost tensor uniform on `[0, 1)` shared by all DMs,
/// kernel rows of normalized positive draws.
pub fn random_team_game(num_states: usize, num_actions: usize, num_dms: usize, seed: u64) -> Result<StochasticGame> {
    if num_states == 0 || num_actions == 0 || num_dms == 0 {
        return Err(Error::InvalidParameter("team game sizes must be positive".into()));
    }
    let joint = num_actions
        .checked_pow(num_dms as u32)
        .ok_or_else(|| Error::InvalidParameter("joint action space too large".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared: Vec<f64> = (0..num_states * joint).map(|_| rng.random()).collect();
    let mut kernel = Vec::with_capacity(num_states * joint * num_states);
    for _ in 0..num_states * joint {
        let w: Vec<f64> = (0..num_states).map(|_| 1.0 - rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        kernel.extend(w.into_iter().map(|v| v / s));
    }
    let game = StochasticGame::new(GameParts {
        num_states,
        action_counts: vec![num_actions; num_dms],
        costs: vec![shared; num_dms],
        kernel,
        discounts: vec![TEAM_DISCOUNT; num_dms],
        initial_dist: vec![1.0 / num_states as f64; num_states],
    })?;
    crate::policy::PolicySpace::new(&game, crate::policy::DEFAULT_ENUMERATION_CAP)?;
    Ok(game)
}

/// Child seed for one cell of an experiment grid (SplitMix64 finalizer over
/// the master seed and the cell coordinates).
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    coords.iter().fold(mix(master), |h, &c| mix(h ^ mix(c)))
}

/// Where the game of an experiment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "kebab-case")]
pub enum GameSpec {
    Pd(#[serde(default)] PdParams),
    Fig7 {
        #[serde(default = "one")]
        a: f64,
    },
    Team {
        num_states: usize,
        num_actions: usize,
        num_dms: usize,
        seed: u64,
    },
    /// Path to a game file.
    File { path: std::path::PathBuf },
    Inline(crate::io::GameFile),
}

fn one() -> f64 {
    1.0
}

impl Default for GameSpec {
    fn default() -> Self {
        GameSpec::Pd(PdParams::default())
    }
}

impl GameSpec {
    pub fn build(&self) -> Result<StochasticGame> {
        match self {
            GameSpec::Pd(p) => build_pd_game(p),
            GameSpec::Fig7 { a } => build_fig7_game(*a),
            GameSpec::Team {
                num_states,
                num_actions,
                num_dms,
                seed,
            } => random_team_game(*num_states, *num_actions, *num_dms, *seed),
            GameSpec::File { path } => crate::io::load_game(path),
            GameSpec::Inline(file) => file.to_game(),
        }
    }
}

/// Equilibrium check run before a prisoner's dilemma sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdPreflight {
    pub equilibria: Vec<usize>,
    /// True iff the equilibria are exactly always-defect and
    /// cooperate-in-state-0 / defect-in-state-1.
    pub two_equilibria: bool,
}

/// Joint policy IDs of the two equilibria the prisoner's dilemma has when
/// the DMs are patient enough and noise is small: always-defect, and
/// cooperate in state 0 / defect in state 1.
pub fn pd_expected_equilibria(table: &ReplyTable) -> Vec<usize> {
    let space = table.space();
    let coop = space.own_index(0, &[0, 1]);
    let defect = space.own_index(0, &[1, 1]);
    vec![space.join(&[coop, coop]), space.join(&[defect, defect])]
}

pub fn pd_preflight(table: &ReplyTable) -> PdPreflight {
    let equilibria = table.equilibria();
    let two_equilibria = equilibria == pd_expected_equilibria(table);
    PdPreflight {
        equilibria,
        two_equilibria,
    }
}

/// Everything needed to reproduce a sweep over phase lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSpec,
    /// Constant phase lengths to sweep.
    pub t_values: Vec<usize>,
    /// Policy updates per run.
    pub num_phases: usize,
    /// Start joint policies; `None` means all of them.
    pub starts: Option<Vec<usize>>,
    pub seeds_per_start: usize,
    /// One entry for all DMs, or one per DM.
    pub params: Vec<LearnerParams>,
    pub master_seed: u64,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            game: GameSpec::default(),
            t_values: vec![10, 25, 50, 100, 1000, 10000, 50000],
            num_phases: 1000,
            starts: None,
            seeds_per_start: 1,
            params: vec![LearnerParams::default()],
            master_seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Short sweep for quick checks; not the full protocol.
    pub fn reduced() -> Self {
        Self {
            t_values: vec![10, 25, 50, 100, 1000],
            num_phases: 200,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_values.is_empty() || self.t_values.contains(&0) {
            return Err(Error::InvalidParameter("phase lengths must be a nonempty list of positive integers".into()));
        }
        if self.seeds_per_start == 0 {
            return Err(Error::InvalidParameter("seeds_per_start must be >= 1".into()));
        }
        if self.params.is_empty() {
            return Err(Error::InvalidParameter("at least one learner parameter set is required".into()));
        }
        Ok(())
    }

    pub fn params_for(&self, num_dms: usize) -> Result<Vec<LearnerParams>> {
        match self.params.len() {
            1 => Ok(vec![self.params[0]; num_dms]),
            n if n == num_dms => Ok(self.params.clone()),
            n => Err(Error::Shape(format!("expected 1 or {num_dms} parameter sets, got {n}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    #[serde(rename = "T")]
    pub t: usize,
    pub frac_eq: f64,
    pub frac_agree: f64,
}

/// One run of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub t: usize,
    pub start: usize,
    pub rep: usize,
    pub seed: u64,
}

/// The grid of runs in output order: T-major, then start, then replication.
pub fn experiment_cells(config: &ExperimentConfig, joint_count: usize) -> Vec<Cell> {
    let starts: Vec<usize> = config.starts.clone().unwrap_or_else(|| (0..joint_count).collect());
    let mut cells = Vec::new();
    for &t in &config.t_values {
        for &start in &starts {
            for rep in 0..config.seeds_per_start {
                let seed = derive_seed(config.master_seed, &[t as u64, start as u64, rep as u64]);
                cells.push(Cell { t, start, rep, seed });
            }
        }
    }
    cells
}

/// Runs every cell of the sweep with the coupled learner; results come back
/// in cell order regardless of how the worker pool schedules them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<(Cell, RunRecord)>> {
    config.validate()?;
    let game = config.game.build()?;
    let table = ReplyTable::new(&game, &config.solver)?;
    let params = config.params_for(game.num_dms())?;
    let cells = experiment_cells(config, table.joint_count());
    if let Some(bad) = cells.iter().find(|c| c.start >= table.joint_count()) {
        return Err(Error::InvalidParameter(format!("start policy {} out of range", bad.start)));
    }
    cells
        .into_par_iter()
        .map(|cell| {
            let rec = run_coupled(
                &game,
                &table,
                &PhaseSchedule::Constant(cell.t),
                &params,
                cell.start,
                config.num_phases,
                cell.seed,
                CoupledOptions::default(),
            )?;
            Ok((cell, rec))
        })
        .collect()
}

/// Averages per-run fractions for each phase length.
pub fn summarize(config: &ExperimentConfig, runs: &[(Cell, RunRecord)]) -> Vec<Table1Row> {
    config
        .t_values
        .iter()
        .map(|&t| {
            let rows: Vec<&RunRecord> = runs.iter().filter(|(c, _)| c.t == t).map(|(_, r)| r).collect();
            let n = rows.len().max(1) as f64;
            Table1Row {
                t,
                frac_eq: rows.iter().map(|r| r.frac_eq()).sum::<f64>() / n,
                frac_agree: rows.iter().map(|r| r.frac_agree()).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn table1_experiment(config: &ExperimentConfig) -> Result<Vec<Table1Row>> {
    let runs = run_experiment(config)?;
    Ok(summarize(config, &runs))
}
