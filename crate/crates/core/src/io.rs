//! JSON game files.
//!
//! Costs are given per DM as arrays nested by state, then by each DM's
//! action (DM 0 outermost); the kernel is nested by state, actions, then
//! next state. Any nesting that flattens to the right length in that order
//! is accepted, so flat lists work too.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::game::{GameParts, StochasticGame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub num_dms: usize,
    pub num_states: usize,
    pub action_counts: Vec<usize>,
    pub costs: Vec<Value>,
    pub kernel: Value,
    pub discounts: Vec<f64>,
    pub initial_dist: Vec<f64>,
}

fn flatten(v: &Value, what: &str, out: &mut Vec<f64>) -> Result<()> {
    match v {
        Value::Array(items) => items.iter().try_for_each(|i| flatten(i, what, out)),
        Value::Number(n) => {
            out.push(n.as_f64().ok_or_else(|| Error::Format(format!("{what}: unrepresentable number {n}")))?);
            Ok(())
        }
        other => Err(Error::Format(format!("{what}: expected numbers, found {other}"))),
    }
}

fn nest(flat: &[f64], dims: &[usize]) -> Value {
    match dims.split_first() {
        None => Value::from(flat[0]),
        Some((_, [])) => Value::from(flat.to_vec()),
        Some((&d, rest)) => {
            let chunk = flat.len() / d;
            Value::Array(flat.chunks(chunk).map(|c| nest(c, rest)).collect())
        }
    }
}

impl GameFile {
    pub fn to_game(&self) -> Result<StochasticGame> {
        if self.action_counts.len() != self.num_dms {
            return Err(Error::Format(format!(
                "num_dms is {} but {} action counts are given",
                self.num_dms,
                self.action_counts.len()
            )));
        }
        let mut costs = Vec::with_capacity(self.costs.len());
        for (dm, c) in self.costs.iter().enumerate() {
            let mut flat = Vec::new();
            flatten(c, &format!("costs of DM {dm}"), &mut flat)?;
            costs.push(flat);
        }
        let mut kernel = Vec::new();
        flatten(&self.kernel, "kernel", &mut kernel)?;
        StochasticGame::new(GameParts {
            num_states: self.num_states,
            action_counts: self.action_counts.clone(),
            costs,
            kernel,
            discounts: self.discounts.clone(),
            initial_dist: self.initial_dist.clone(),
        })
    }

    pub fn from_game(game: &StochasticGame) -> Self {
        let ns = game.num_states();
        let mut dims = vec![ns];
        dims.extend_from_slice(game.action_counts());
        let costs = (0..game.num_dms()).map(|dm| nest(game.cost_table(dm), &dims)).collect();
        let mut kdims = dims.clone();
        kdims.push(ns);
        let kernel: Vec<f64> = (0..ns)
            .flat_map(|x| (0..game.joint_count()).flat_map(move |j| game.kernel_row(x, j).to_vec()))
            .collect();
        Self {
            num_dms: game.num_dms(),
            num_states: ns,
            action_counts: game.action_counts().to_vec(),
            costs,
            kernel: nest(&kernel, &kdims),
            discounts: game.discounts().to_vec(),
            initial_dist: game.initial_dist().to_vec(),
        }
    }
}

pub fn parse_game(text: &str) -> Result<StochasticGame> {
    let file: GameFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    file.to_game()
}

pub fn load_game(path: &Path) -> Result<StochasticGame> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    parse_game(&text)
}

pub fn game_to_json(game: &StochasticGame) -> String {
    serde_json::to_string_pretty(&GameFile::from_game(game)).expect("plain data serializes")
}
