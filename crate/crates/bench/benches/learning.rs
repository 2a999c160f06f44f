use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use decq::learning::{alg1_phase, single_dm_q_learning};
use decq::{
    build_pd_game, random_team_game, run_alg1, run_coupled, CoupledOptions, LearnerParams, LearnerState, PdParams,
    PhaseSchedule, RandomizedPolicy, ReplyTable, SolverConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

const PHASE: usize = 10_000;

fn phase_throughput(c: &mut Criterion) {
    let game = build_pd_game(&PdParams::default()).unwrap();
    let table = ReplyTable::new(&game, &SolverConfig::default()).unwrap();
    let params = vec![LearnerParams::default(); 2];
    let mut group = c.benchmark_group("alg1_phase");
    group.throughput(Throughput::Elements(PHASE as u64));
    group.bench_function("pd", |b| {
        b.iter_batched(
            || {
                let joint = table.space().joint_policy(0);
                let states: Vec<LearnerState> = joint
                    .policies()
                    .iter()
                    .zip(&params)
                    .map(|(p, lp)| LearnerState::new(&game, p.clone(), lp).unwrap())
                    .collect();
                (states, ChaCha8Rng::seed_from_u64(3))
            },
            |(mut states, mut rng)| {
                let mut x = 0;
                alg1_phase(&game, &mut states, &params, &mut x, PHASE, &mut rng).unwrap();
                states
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn full_runs(c: &mut Criterion) {
    let game = build_pd_game(&PdParams::default()).unwrap();
    let table = ReplyTable::new(&game, &SolverConfig::default()).unwrap();
    let params = vec![LearnerParams::default(); 2];
    let schedule = PhaseSchedule::Constant(100);
    c.bench_function("run_alg1/pd/T100x100", |b| {
        b.iter(|| run_alg1(&game, &table, &schedule, &params, 0, 100, black_box(5)).unwrap())
    });
    c.bench_function("run_coupled/pd/T100x100", |b| {
        b.iter(|| run_coupled(&game, &table, &schedule, &params, 0, 100, black_box(5), CoupledOptions::default()).unwrap())
    });
}

fn single_agent(c: &mut Criterion) {
    let game = random_team_game(3, 2, 1, 2024).unwrap();
    let behavior = RandomizedPolicy::uniform(&game, 0);
    let mut group = c.benchmark_group("q_learning");
    group.throughput(Throughput::Elements(100_000));
    group.bench_function("mdp_3x2", |b| {
        b.iter(|| single_dm_q_learning(&game, &behavior, 100_000, 0.7, black_box(1)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, phase_throughput, full_runs, single_agent);
criterion_main!(benches);
