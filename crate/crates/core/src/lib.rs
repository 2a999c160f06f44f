//! Decentralized Q-learning for stochastic games: the game model, exact
//! solvers, reply graphs, inertial reply dynamics and the learners.

// NaN-rejecting `!(x > 0.0)` checks are intended; index loops mirror the sums they compute.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod game;
pub mod policy;
pub mod solver;
pub mod replies;
pub mod graph;
pub mod dynamics;
pub mod learning;
pub mod experiments;
pub mod io;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use game::{GameParts, StochasticGame, ValidationReport, Violation};
pub use policy::{
    enumerate_joint_policies, DeterministicPolicy, JointPolicy, PolicySpace, RandomizedPolicy,
    DEFAULT_ENUMERATION_CAP,
};
pub use solver::{
    best_reply_set, bellman_optimal_operator, optimal_q_factors, policy_q_factors, policy_value,
    separation_constants, InducedMdp, QTable, SeparationConstants, SolverConfig, ValueVector,
};
pub use replies::ReplyTable;
pub use graph::{
    build_reply_graph, certify_weak_acyclicity, equilibria, reply_graph_from_table, AcyclicityCertificate,
    Edge, ReplyGraph, ReplyVariant,
};
pub use dynamics::{
    best_reply_step, better_reply_step, run_best_reply_process, run_reply_process, DecisionSource,
    InertiaParams, PhaseDraws, PolicyTrajectory, ReplyKind,
};
pub use learning::{
    run_alg1, run_alg2, run_coupled, Alg2Continuation, CoupledOptions, LearnerParams, LearnerState, PhaseRecord,
    PhaseSchedule, ResetMode, RunRecord,
};
pub use experiments::{
    build_fig7_game, build_pd_game, derive_seed, random_team_game, table1_experiment, ExperimentConfig, GameSpec,
    PdParams, PdPreflight, Table1Row,
};
pub use io::GameFile;
