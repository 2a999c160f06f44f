//! Strict best/better reply graphs over deterministic joint policies.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::StochasticGame;
use crate::replies::ReplyTable;
use crate::solver::{best_reply_set, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplyVariant {
    BestSingle,
    BetterSingle,
    BestMulti,
    BetterMulti,
}

impl ReplyVariant {
    pub const ALL: [ReplyVariant; 4] = [
        ReplyVariant::BestSingle,
        ReplyVariant::BetterSingle,
        ReplyVariant::BestMulti,
        ReplyVariant::BetterMulti,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReplyVariant::BestSingle => "best-single",
            ReplyVariant::BetterSingle => "better-single",
            ReplyVariant::BestMulti => "best-multi",
            ReplyVariant::BetterMulti => "better-multi",
        }
    }

    fn is_best(self) -> bool {
        matches!(self, ReplyVariant::BestSingle | ReplyVariant::BestMulti)
    }

    fn is_multi(self) -> bool {
        matches!(self, ReplyVariant::BestMulti | ReplyVariant::BetterMulti)
    }
}

impl std::str::FromStr for ReplyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown reply variant {s:?}")))
    }
}

impl std::fmt::Display for ReplyVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub target: usize,
    /// DMs whose policy changes along this edge, ascending.
    pub deviators: Vec<usize>,
}

/// Nodes are joint policy IDs `0..num_nodes` in enumeration order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplyGraph {
    pub variant: ReplyVariant,
    pub num_nodes: usize,
    pub adjacency: Vec<Vec<Edge>>,
}

impl ReplyGraph {
    pub fn sinks(&self) -> Vec<usize> {
        (0..self.num_nodes)
            .filter(|&n| self.adjacency[n].is_empty())
            .collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from].iter().any(|e| e.target == to)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Graphviz digraph; `label` renders node IDs.
    pub fn to_dot(&self, label: impl Fn(usize) -> String) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", self.variant);
        let sinks = self.sinks();
        for n in 0..self.num_nodes {
            let shape = if sinks.binary_search(&n).is_ok() { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  n{n} [label=\"{}\", shape={shape}];", label(n));
        }
        for (n, edges) in self.adjacency.iter().enumerate() {
            for e in edges {
                let who: Vec<String> = e.deviators.iter().map(|d| d.to_string()).collect();
                let _ = writeln!(out, "  n{n} -> n{} [label=\"{}\"];", e.target, who.join(","));
            }
        }
        out.push_str("}\n");
        out
    }
}

fn outgoing(table: &ReplyTable, variant: ReplyVariant, id: usize) -> Vec<Edge> {
    let space = table.space();
    let moves: Vec<Vec<usize>> = (0..table.num_dms())
        .map(|dm| {
            if variant.is_best() {
                table.strict_best_replies(id, dm)
            } else {
                table.strict_better_replies(id, dm)
            }
        })
        .collect();
    let mut edges = Vec::new();
    if !variant.is_multi() {
        for (dm, cands) in moves.iter().enumerate() {
            for &own in cands {
                edges.push(Edge {
                    target: space.replace(id, dm, own),
                    deviators: vec![dm],
                });
            }
        }
        return edges;
    }
    let movers: Vec<usize> = (0..moves.len()).filter(|&dm| !moves[dm].is_empty()).collect();
    for mask in 1u64..(1u64 << movers.len()) {
        let deviators: Vec<usize> = movers
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask >> bit & 1 == 1)
            .map(|(_, &dm)| dm)
            .collect();
        let mut targets = vec![id];
        for &dm in &deviators {
            targets = targets
                .into_iter()
                .flat_map(|t| moves[dm].iter().map(move |&own| space.replace(t, dm, own)))
                .collect();
        }
        edges.extend(targets.into_iter().map(|target| Edge {
            target,
            deviators: deviators.clone(),
        }));
    }
    edges
}

/// Builds the reply graph from cached reply data.
pub fn reply_graph_from_table(table: &ReplyTable, variant: ReplyVariant) -> ReplyGraph {
    let adjacency = (0..table.joint_count())
        .into_par_iter()
        .map(|id| outgoing(table, variant, id))
        .collect();
    ReplyGraph {
        variant,
        num_nodes: table.joint_count(),
        adjacency,
    }
}

pub fn build_reply_graph(game: &StochasticGame, variant: ReplyVariant, cfg: &SolverConfig) -> Result<ReplyGraph> {
    Ok(reply_graph_from_table(&ReplyTable::new(game, cfg)?, variant))
}

/// Equilibrium node IDs: sinks of the best-single graph, each confirmed
/// against the definition via [`best_reply_set`].
pub fn equilibria(game: &StochasticGame, cfg: &SolverConfig) -> Result<Vec<usize>> {
    let table = ReplyTable::new(game, cfg)?;
    let sinks = reply_graph_from_table(&table, ReplyVariant::BestSingle).sinks();
    for &id in &sinks {
        let joint = table.space().joint_policy(id);
        for dm in 0..game.num_dms() {
            let best = best_reply_set(game, dm, &joint.opponents(dm), cfg)?;
            if !best.contains(joint.policy(dm)) {
                return Err(Error::Precondition(format!(
                    "sink {id} is not an equilibrium for DM {dm}; tolerance too loose"
                )));
            }
        }
    }
    Ok(sinks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcyclicityCertificate {
    pub weakly_acyclic: bool,
    /// Shortest path to a sink from every node that has one (sinks map to themselves).
    pub witness_paths: BTreeMap<usize, Vec<usize>>,
    /// Longest of the shortest witness paths, in edges.
    #[serde(rename = "L")]
    pub max_path_length: usize,
    pub equilibria: Vec<usize>,
    /// Nodes with no path to a sink.
    pub unreachable: Vec<usize>,
}

/// Reverse breadth-first search from the sinks.
pub fn certify_weak_acyclicity(graph: &ReplyGraph) -> AcyclicityCertificate {
    let n = graph.num_nodes;
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (from, edges) in graph.adjacency.iter().enumerate() {
        for e in edges {
            reverse[e.target].push(from);
        }
    }
    let sinks = graph.sinks();
    let mut next: Vec<Option<usize>> = vec![None; n];
    let mut dist: Vec<Option<usize>> = vec![None; n];
    let mut queue = VecDeque::new();
    for &s in &sinks {
        dist[s] = Some(0);
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap();
        for &p in &reverse[v] {
            if dist[p].is_none() {
                dist[p] = Some(d + 1);
                next[p] = Some(v);
                queue.push_back(p);
            }
        }
    }
    let mut witness_paths = BTreeMap::new();
    let mut unreachable = Vec::new();
    let mut longest = 0;
    for v in 0..n {
        match dist[v] {
            None => unreachable.push(v),
            Some(d) => {
                longest = longest.max(d);
                let mut path = vec![v];
                let mut cur = v;
                while let Some(w) = next[cur] {
                    path.push(w);
                    cur = w;
                }
                witness_paths.insert(v, path);
            }
        }
    }
    AcyclicityCertificate {
        weakly_acyclic: unreachable.is_empty(),
        witness_paths,
        max_path_length: longest,
        equilibria: sinks,
        unreachable,
    }
}
