mod common;

use common::random_game;
use decq::{
    build_fig7_game, certify_weak_acyclicity, random_team_game, reply_graph_from_table, ReplyTable, ReplyVariant,
    SolverConfig,
};
use proptest::prelude::*;

fn fig7_label(table: &ReplyTable, id: usize) -> [usize; 3] {
    let own = table.space().split(id);
    [own[0], own[1], own[2]]
}

#[test]
fn fig7_certificates() {
    let game = build_fig7_game(1.0).unwrap();
    let table = ReplyTable::new(&game, &SolverConfig::default()).unwrap();
    let mut expected_unreachable = vec![[0, 0, 0], [0, 2, 0], [2, 2, 0], [2, 0, 0], [0, 0, 1], [2, 0, 1]];
    expected_unreachable.sort();
    for variant in ReplyVariant::ALL {
        let cert = certify_weak_acyclicity(&reply_graph_from_table(&table, variant));
        let eq: Vec<_> = cert.equilibria.iter().map(|&n| fig7_label(&table, n)).collect();
        assert!(eq.contains(&[1, 2, 1]));
        match variant {
            ReplyVariant::BestSingle | ReplyVariant::BetterSingle => {
                assert!(!cert.weakly_acyclic);
                let mut un: Vec<_> = cert.unreachable.iter().map(|&n| fig7_label(&table, n)).collect();
                un.sort();
                assert_eq!(un, expected_unreachable, "{variant}");
            }
            _ => {
                assert!(cert.weakly_acyclic, "{variant}");
                assert!(cert.unreachable.is_empty());
            }
        }
    }
}

#[test]
fn fig7_structure_does_not_depend_on_scale() {
    let cfg = SolverConfig::default();
    let base = ReplyTable::new(&build_fig7_game(1.0).unwrap(), &cfg).unwrap();
    let scaled = ReplyTable::new(&build_fig7_game(3.5).unwrap(), &cfg).unwrap();
    for v in ReplyVariant::ALL {
        assert_eq!(
            reply_graph_from_table(&base, v).adjacency,
            reply_graph_from_table(&scaled, v).adjacency
        );
    }
}

#[test]
fn team_games_are_weakly_acyclic() {
    let cfg = SolverConfig::default();
    for seed in 0..30u64 {
        let ns = 1 + (seed % 3) as usize;
        let game = random_team_game(ns, 2, 2, seed).unwrap();
        let table = ReplyTable::new(&game, &cfg).unwrap();
        let cert = certify_weak_acyclicity(&reply_graph_from_table(&table, ReplyVariant::BestSingle));
        assert!(cert.weakly_acyclic, "seed {seed}");
        assert!(!cert.equilibria.is_empty());
    }
}

#[test]
fn witness_paths_follow_edges_to_sinks() {
    let game = random_team_game(2, 2, 2, 77).unwrap();
    let table = ReplyTable::new(&game, &SolverConfig::default()).unwrap();
    let graph = reply_graph_from_table(&table, ReplyVariant::BestSingle);
    let cert = certify_weak_acyclicity(&graph);
    for (&from, path) in &cert.witness_paths {
        assert_eq!(path[0], from);
        assert!(table.is_equilibrium(*path.last().unwrap()));
        for w in path.windows(2) {
            assert!(graph.has_edge(w[0], w[1]));
        }
        assert!(path.len() - 1 <= cert.max_path_length);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Best edges are better edges, and single-DM edges are multi-DM edges.
    #[test]
    fn edge_sets_nest(seed in 0u64..10_000) {
        let game = random_game(2, 2, 2, 0.8, seed);
        let table = ReplyTable::new(&game, &SolverConfig::default()).unwrap();
        let g = |v| reply_graph_from_table(&table, v);
        let (bs, bts, bm, btm) = (
            g(ReplyVariant::BestSingle),
            g(ReplyVariant::BetterSingle),
            g(ReplyVariant::BestMulti),
            g(ReplyVariant::BetterMulti),
        );
        for from in 0..table.joint_count() {
            for e in &bs.adjacency[from] {
                prop_assert!(bts.has_edge(from, e.target));
                prop_assert!(bm.has_edge(from, e.target));
            }
            for e in &bm.adjacency[from] {
                prop_assert!(btm.has_edge(from, e.target));
            }
            for e in &bts.adjacency[from] {
                prop_assert!(btm.has_edge(from, e.target));
            }
        }
        // sinks are the equilibria in every variant
        for v in [&bs, &bts, &bm, &btm] {
            prop_assert_eq!(v.sinks(), table.equilibria());
        }
    }
}
