use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use decq::dynamics::{run_reply_process, ReplyKind};
use decq::experiments::{experiment_cells, pd_preflight, run_experiment, summarize, Cell};
use decq::graph::{certify_weak_acyclicity, reply_graph_from_table};
use decq::io::{game_to_json, GameFile};
use decq::learning::{run_alg2, run_coupled, Alg2Continuation, CoupledOptions, PhaseSchedule, RunRecord};
use decq::solver::{best_reply_set, separation_constants, InducedMdp};
use decq::{
    random_team_game, ExperimentConfig, GameSpec, InertiaParams, RandomizedPolicy, ReplyTable, ReplyVariant,
    StochasticGame,
};
use rand::SeedableRng;

#[derive(Parser, Debug)]
#[command(name = "decq", version, about = "Decentralized Q-learning in finite stochastic games")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Game file, game builder spec, or experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout if omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a game's shapes, probabilities and discounts.
    Validate,
    /// Optimal Q-factors of one DM against fixed opponents.
    Solve(SolveArgs),
    /// Reply graph and weak acyclicity certificate.
    Graph(GraphArgs),
    /// Exact reply process with inertia.
    RunBaseline(BaselineArgs),
    /// Single-table learner.
    RunAlg1(RunArgs),
    /// Two-table learner.
    RunAlg2(Alg2Args),
    /// Single-table learner alongside the exact best reply process.
    RunCoupled(RunArgs),
    /// Equilibrium and agreement fractions per phase length.
    Table1(Table1Args),
    /// Certificates for the three-DM single-state example.
    Fig7(Fig7Args),
    /// Random team game as a game file.
    Teamgen(TeamArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, default_value_t = 0)]
    dm: usize,
    /// Opponent policy as DM=a0,a1,... (one action per state); unlisted opponents play uniformly.
    #[arg(long = "opponent", value_name = "DM=ACTIONS")]
    opponents: Vec<String>,
    /// Print separation constants and experimentation bounds instead.
    #[arg(long)]
    separation: bool,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long, default_value = "best-single")]
    variant: ReplyVariant,
    /// Also write a Graphviz description here.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Best,
    Better,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Start joint policy; all of them if omitted.
    #[arg(long)]
    start: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long, value_enum, default_value_t = Kind::Best)]
    kind: Kind,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Constant phase length; overrides the config's list.
    #[arg(long = "phase-length")]
    phase_length: Option<usize>,
    /// Policy updates per run.
    #[arg(long)]
    phases: Option<usize>,
    /// Start joint policy; overrides the config.
    #[arg(long)]
    start: Option<usize>,
    #[arg(long = "seeds-per-start")]
    seeds_per_start: Option<usize>,
    /// Tolerance for every DM; overrides the config.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Continuation {
    BaselineTable,
    OwnTable,
}

#[derive(Args, Debug)]
struct Alg2Args {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value_t = Continuation::BaselineTable)]
    continuation: Continuation,
}

#[derive(Args, Debug)]
struct Table1Args {
    /// Short sweep (T <= 1000, 200 updates); not the full protocol.
    #[arg(long)]
    reduced: bool,
    #[arg(long = "seeds-per-start")]
    seeds_per_start: Option<usize>,
    /// Comma-separated phase lengths.
    #[arg(long = "t-values", value_delimiter = ',')]
    t_values: Option<Vec<usize>>,
    #[arg(long)]
    phases: Option<usize>,
}

#[derive(Args, Debug)]
struct Fig7Args {
    #[arg(long, default_value_t = 1.0)]
    a: f64,
}

#[derive(Args, Debug)]
struct TeamArgs {
    #[arg(long, default_value_t = 2)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 2)]
    dms: usize,
}

/// Accepted shapes of the `--config` document.
enum ConfigDoc {
    Game(GameFile),
    Experiment(ExperimentConfig),
    Spec(GameSpec),
}

impl ConfigDoc {
    /// The shape is chosen by key so that parse errors name the real problem.
    fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let has = |k: &str| value.get(k).is_some();
        Ok(if has("builder") {
            ConfigDoc::Spec(serde_json::from_value(value).context("game spec")?)
        } else if has("num_dms") {
            ConfigDoc::Game(serde_json::from_value(value).context("game file")?)
        } else {
            ConfigDoc::Experiment(serde_json::from_value(value).context("experiment config")?)
        })
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        None => ExperimentConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let doc = ConfigDoc::parse(&text).with_context(|| format!("reading {}", path.display()))?;
            match doc {
                ConfigDoc::Game(file) => ExperimentConfig {
                    game: GameSpec::Inline(file),
                    ..ExperimentConfig::default()
                },
                ConfigDoc::Experiment(mut e) => {
                    if let GameSpec::File { path: p } = &e.game {
                        if p.is_relative() {
                            let base = path.parent().unwrap_or(Path::new("."));
                            e.game = GameSpec::File { path: base.join(p) };
                        }
                    }
                    e
                }
                ConfigDoc::Spec(spec) => ExperimentConfig {
                    game: spec,
                    ..ExperimentConfig::default()
                },
            }
        }
    };
    if let Some(seed) = g.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn output(g: &Global) -> Result<Box<dyn Write>> {
    Ok(match &g.out {
        Some(p) => Box::new(io::BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn joint_label(table: &ReplyTable, id: usize) -> String {
    let parts: Vec<String> = table
        .space()
        .joint_policy(id)
        .policies()
        .iter()
        .map(|p| p.actions().iter().map(|a| a.to_string()).collect::<Vec<_>>().join(""))
        .collect();
    parts.join("|")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = load_config(&cli.global)?;
    let g = &cli.global;
    match &cli.command {
        Command::Validate => validate(g, &cfg),
        Command::Solve(a) => solve(g, &cfg, a),
        Command::Graph(a) => graph(g, &cfg, a),
        Command::RunBaseline(a) => baseline(g, &cfg, a),
        Command::RunAlg1(a) => learn(g, &cfg, a, Learner::Alg1),
        Command::RunCoupled(a) => learn(g, &cfg, a, Learner::Coupled),
        Command::RunAlg2(a) => learn(
            g,
            &cfg,
            &a.run,
            Learner::Alg2(match a.continuation {
                Continuation::BaselineTable => Alg2Continuation::BaselineTable,
                Continuation::OwnTable => Alg2Continuation::OwnTable,
            }),
        ),
        Command::Table1(a) => table1(g, cfg, a),
        Command::Fig7(a) => fig7(g, &cfg, a),
        Command::Teamgen(a) => teamgen(g, a),
    }
}

fn validate(g: &Global, cfg: &ExperimentConfig) -> Result<ExitCode> {
    let game = match cfg.game.build() {
        Ok(game) => game,
        Err(e) => {
            eprintln!("invalid game: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    let report = game.validate();
    let mut out = output(g)?;
    if report.is_ok() {
        writeln!(out, "ok: {} DMs, {} states, actions {:?}", game.num_dms(), game.num_states(), game.action_counts())?;
        if !game.reachability_check() {
            writeln!(out, "note: some state is unreachable from another; the learners will refuse this game")?;
        }
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &report.violations {
            writeln!(out, "violation: {v}")?;
        }
        Ok(ExitCode::from(1))
    }
}

fn parse_opponent(spec: &str, game: &StochasticGame) -> Result<RandomizedPolicy> {
    let (dm, actions) = spec.split_once('=').ok_or_else(|| anyhow!("expected DM=ACTIONS, got {spec:?}"))?;
    let dm: usize = dm.trim().parse().context("opponent DM index")?;
    game.check_dm(dm)?;
    let actions: Vec<usize> = actions
        .split(',')
        .map(|a| a.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .context("opponent actions")?;
    if actions.len() != game.num_states() {
        bail!("opponent {dm} needs {} actions, got {}", game.num_states(), actions.len());
    }
    Ok(decq::DeterministicPolicy::new(dm, game.num_actions(dm), actions)?.to_randomized())
}

fn solve(g: &Global, cfg: &ExperimentConfig, a: &SolveArgs) -> Result<ExitCode> {
    let game = cfg.game.build()?;
    let mut out = output(g)?;
    if a.separation {
        let sep = separation_constants(&game, cfg.solver.tol, cfg.solver.cap)?;
        serde_json::to_writer_pretty(&mut out, &sep)?;
        writeln!(out)?;
        return Ok(ExitCode::SUCCESS);
    }
    game.check_dm(a.dm)?;
    let mut given: Vec<Option<RandomizedPolicy>> = vec![None; game.num_dms()];
    for spec in &a.opponents {
        let p = parse_opponent(spec, &game)?;
        if p.dm() == a.dm {
            bail!("--opponent names the solving DM {}", a.dm);
        }
        let slot = p.dm();
        given[slot] = Some(p);
    }
    let opponents: Vec<RandomizedPolicy> = (0..game.num_dms())
        .filter(|&j| j != a.dm)
        .map(|j| given[j].clone().unwrap_or_else(|| RandomizedPolicy::uniform(&game, j)))
        .collect();
    let q = InducedMdp::new(&game, a.dm, &opponents)?.optimal_q(cfg.solver.tol)?;
    let best = best_reply_set(&game, a.dm, &opponents, &cfg.solver)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string()];
    header.extend((0..game.num_actions(a.dm)).map(|u| format!("u{u}")));
    header.push("best".into());
    w.write_record(&header)?;
    for x in 0..game.num_states() {
        let mut row = vec![x.to_string()];
        row.extend(q.row(x).iter().map(|v| v.to_string()));
        let acts: Vec<String> = q.near_argmin(x, cfg.solver.tie_tol).iter().map(|u| u.to_string()).collect();
        row.push(acts.join(" "));
        w.write_record(&row)?;
    }
    w.flush()?;
    eprintln!("{} best replies", best.len());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct NodeOut {
    id: usize,
    policies: Vec<Vec<usize>>,
    equilibrium: bool,
}

#[derive(Serialize)]
struct EdgeOut {
    from: usize,
    to: usize,
    deviators: Vec<usize>,
}

#[derive(Serialize)]
struct GraphOut {
    variant: ReplyVariant,
    nodes: Vec<NodeOut>,
    edges: Vec<EdgeOut>,
    certificate: decq::AcyclicityCertificate,
}

fn graph(g: &Global, cfg: &ExperimentConfig, a: &GraphArgs) -> Result<ExitCode> {
    let game = cfg.game.build()?;
    let table = ReplyTable::new(&game, &cfg.solver)?;
    let graph = reply_graph_from_table(&table, a.variant);
    let certificate = certify_weak_acyclicity(&graph);
    let nodes = (0..graph.num_nodes)
        .map(|id| NodeOut {
            id,
            policies: table
                .space()
                .joint_policy(id)
                .policies()
                .iter()
                .map(|p| p.actions().to_vec())
                .collect(),
            equilibrium: table.is_equilibrium(id),
        })
        .collect();
    let edges = graph
        .adjacency
        .iter()
        .enumerate()
        .flat_map(|(from, es)| {
            es.iter().map(move |e| EdgeOut {
                from,
                to: e.target,
                deviators: e.deviators.clone(),
            })
        })
        .collect();
    if let Some(path) = &a.dot {
        std::fs::write(path, graph.to_dot(|id| joint_label(&table, id)))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let mut out = output(g)?;
    serde_json::to_writer_pretty(
        &mut out,
        &GraphOut {
            variant: a.variant,
            nodes,
            edges,
            certificate,
        },
    )?;
    writeln!(out)?;
    Ok(ExitCode::SUCCESS)
}

fn baseline(g: &Global, cfg: &ExperimentConfig, a: &BaselineArgs) -> Result<ExitCode> {
    let game = cfg.game.build()?;
    let table = ReplyTable::new(&game, &cfg.solver)?;
    let params = InertiaParams::uniform(game.num_dms(), a.lambda)?;
    let starts: Vec<usize> = match a.start {
        Some(s) => vec![s],
        None => (0..table.joint_count()).collect(),
    };
    let kind = match a.kind {
        Kind::Best => ReplyKind::Best,
        Kind::Better => ReplyKind::Better,
    };
    let cells: Vec<(usize, usize, u64)> = starts
        .iter()
        .flat_map(|&s| (0..a.seeds).map(move |r| (s, r)))
        .map(|(s, r)| (s, r, decq::derive_seed(cfg.master_seed, &[s as u64, r as u64])))
        .collect();
    let runs: Vec<_> = cells
        .par_iter()
        .map(|&(start, _, seed)| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            run_reply_process(&table, kind, start, a.steps, &params, &mut rng)
        })
        .collect::<decq::Result<_>>()?;
    let mut w = csv::Writer::from_writer(output(g)?);
    w.write_record(["seed", "start", "step", "policy_id", "at_equilibrium"])?;
    for ((start, _, seed), traj) in cells.iter().zip(&runs) {
        for (k, (&id, &eq)) in traj.policies.iter().zip(&traj.at_equilibrium).enumerate() {
            w.write_record([seed.to_string(), start.to_string(), k.to_string(), id.to_string(), (eq as u8).to_string()])?;
        }
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Clone, Copy)]
enum Learner {
    Alg1,
    Coupled,
    Alg2(Alg2Continuation),
}

fn apply_run_args(cfg: &ExperimentConfig, a: &RunArgs) -> ExperimentConfig {
    let mut c = cfg.clone();
    if let Some(t) = a.phase_length {
        c.t_values = vec![t];
    }
    if let Some(k) = a.phases {
        c.num_phases = k;
    }
    if let Some(s) = a.start {
        c.starts = Some(vec![s]);
    }
    if let Some(n) = a.seeds_per_start {
        c.seeds_per_start = n;
    }
    if let Some(d) = a.delta {
        for p in &mut c.params {
            p.delta = d;
        }
    }
    c
}

fn warn_params(cfg: &ExperimentConfig, num_dms: usize) -> Result<()> {
    for (dm, p) in cfg.params_for(num_dms)?.iter().enumerate() {
        for w in p.warnings(dm) {
            eprintln!("warning: {w}");
        }
    }
    Ok(())
}

fn learn(g: &Global, cfg: &ExperimentConfig, a: &RunArgs, which: Learner) -> Result<ExitCode> {
    let cfg = apply_run_args(cfg, a);
    cfg.validate()?;
    let game = cfg.game.build()?;
    let table = ReplyTable::new(&game, &cfg.solver)?;
    let params = cfg.params_for(game.num_dms())?;
    if !matches!(which, Learner::Alg2(_)) {
        warn_params(&cfg, game.num_dms())?;
    }
    let cells = experiment_cells(&cfg, table.joint_count());
    let runs: Vec<RunRecord> = cells
        .par_iter()
        .map(|c| {
            let schedule = PhaseSchedule::Constant(c.t);
            match which {
                Learner::Alg1 => decq::run_alg1(&game, &table, &schedule, &params, c.start, cfg.num_phases, c.seed),
                Learner::Coupled => run_coupled(
                    &game,
                    &table,
                    &schedule,
                    &params,
                    c.start,
                    cfg.num_phases,
                    c.seed,
                    CoupledOptions::default(),
                ),
                Learner::Alg2(cont) => run_alg2(&game, &table, &schedule, &params, c.start, cfg.num_phases, c.seed, cont),
            }
        })
        .collect::<decq::Result<_>>()?;
    write_runs(g, &cells, &runs)?;
    Ok(ExitCode::SUCCESS)
}

fn write_runs(g: &Global, cells: &[Cell], runs: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(g)?);
    w.write_record(["T", "seed", "start", "phase", "policy_id", "at_equilibrium", "agreement"])?;
    for (c, r) in cells.iter().zip(runs) {
        for p in &r.phases {
            let agree = p.agreement.map(|b| (b as u8).to_string()).unwrap_or_default();
            w.write_record([
                c.t.to_string(),
                c.seed.to_string(),
                c.start.to_string(),
                p.phase.to_string(),
                p.policy_id.to_string(),
                (p.at_equilibrium as u8).to_string(),
                agree,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn table1(g: &Global, cfg: ExperimentConfig, a: &Table1Args) -> Result<ExitCode> {
    let mut cfg = if a.reduced {
        ExperimentConfig {
            game: cfg.game,
            master_seed: cfg.master_seed,
            ..ExperimentConfig::reduced()
        }
    } else {
        cfg
    };
    if let Some(n) = a.seeds_per_start {
        cfg.seeds_per_start = n;
    }
    if let Some(ts) = &a.t_values {
        cfg.t_values = ts.clone();
    }
    if let Some(k) = a.phases {
        cfg.num_phases = k;
    }
    let game = cfg.game.build()?;
    if let GameSpec::Pd(_) = cfg.game {
        let pre = pd_preflight(&ReplyTable::new(&game, &cfg.solver)?);
        if !pre.two_equilibria {
            eprintln!(
                "warning: this prisoner's dilemma has {} equilibria ({:?}), not the two-equilibrium structure; \
                 raise beta or lower gamma to get it",
                pre.equilibria.len(),
                pre.equilibria
            );
        }
    }
    warn_params(&cfg, game.num_dms())?;
    let runs = run_experiment(&cfg)?;
    let rows = summarize(&cfg, &runs);
    let mut w = csv::Writer::from_writer(output(g)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct Fig7Out {
    variant: ReplyVariant,
    weakly_acyclic: bool,
    equilibria: Vec<String>,
    unreachable: Vec<String>,
    #[serde(rename = "L")]
    max_path_length: usize,
}

fn fig7(g: &Global, cfg: &ExperimentConfig, a: &Fig7Args) -> Result<ExitCode> {
    let game = decq::build_fig7_game(a.a)?;
    let table = ReplyTable::new(&game, &cfg.solver)?;
    // 1-based (row, column, matrix) labels
    let label = |id: usize| {
        let own = table.space().split(id);
        format!("({},{},{})", own[0] + 1, own[1] + 1, own[2] + 1)
    };
    let out: Vec<Fig7Out> = ReplyVariant::ALL
        .iter()
        .map(|&v| {
            let c = certify_weak_acyclicity(&reply_graph_from_table(&table, v));
            Fig7Out {
                variant: v,
                weakly_acyclic: c.weakly_acyclic,
                equilibria: c.equilibria.iter().map(|&n| label(n)).collect(),
                unreachable: c.unreachable.iter().map(|&n| label(n)).collect(),
                max_path_length: c.max_path_length,
            }
        })
        .collect();
    let mut w = output(g)?;
    serde_json::to_writer_pretty(&mut w, &out)?;
    writeln!(w)?;
    Ok(ExitCode::SUCCESS)
}

fn teamgen(g: &Global, a: &TeamArgs) -> Result<ExitCode> {
    let game = random_team_game(a.states, a.actions, a.dms, g.seed.unwrap_or(0))?;
    let mut w = output(g)?;
    writeln!(w, "{}", game_to_json(&game))?;
    Ok(ExitCode::SUCCESS)
}
