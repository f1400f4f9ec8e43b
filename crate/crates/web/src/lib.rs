//! Browser bindings: run a small experiment, look at the final assignment of
//! one replication, and try the limited-payload reconstruction.
//!
//! Configs are JSON objects using the same keys as the TOML config files.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use dfpsim::beliefs::reconstruct as rebuild;
use dfpsim::config::ConfigFile;
use dfpsim::engine::{run_experiment, run_replication, AggregateRecord};
use dfpsim::{ActionIndex, ReconstructionRule};

/// Largest `agents x steps x replications` the page will run.
pub const WORK_CAP: u64 = 20_000_000;

fn parse(config_json: &str) -> Result<dfpsim::SimConfig, String> {
    let file: ConfigFile = serde_json::from_str(config_json).map_err(|e| e.to_string())?;
    if file.game_file.is_some() || file.out_dir.is_some() {
        return Err("game_file and out_dir are not available in the browser".into());
    }
    let (sim, _) = file.resolve().map_err(|e| e.to_string())?;
    let work = sim.game.n_agents() as u64 * sim.t_final * sim.replications;
    if work > WORK_CAP {
        return Err(format!("{work} agent-steps exceeds the demo limit of {WORK_CAP}"));
    }
    Ok(sim)
}

#[derive(Serialize)]
struct Traces {
    rows: Vec<AggregateRecord>,
    attempts: u64,
    successes: u64,
}

/// Aggregated traces of an experiment as JSON.
pub fn simulate_json(config_json: &str) -> Result<String, String> {
    let sim = parse(config_json)?;
    let result = run_experiment(&sim).map_err(|e| e.to_string())?;
    let traces = Traces {
        attempts: result.replications.iter().map(|r| r.attempts_total).sum(),
        successes: result.replications.iter().map(|r| r.successes_total).sum(),
        rows: result.aggregate,
    };
    serde_json::to_string(&traces).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Assignment {
    agents: Vec<[f64; 2]>,
    targets: Vec<[f64; 2]>,
    /// Target chosen by each agent at the end.
    profile: Vec<usize>,
    steps_run: u64,
    converged_at: Option<u64>,
}

/// Positions and final choices of replication 0.
pub fn assignment_json(config_json: &str) -> Result<String, String> {
    let sim = parse(config_json)?;
    let game = sim.game.instantiate(sim.seed, 0).map_err(|e| e.to_string())?;
    let target = game
        .as_target_assignment()
        .ok_or("only target-assignment games have positions")?;
    let (agents, targets) = match (target.agent_positions(), target.target_positions()) {
        (Some(a), Some(t)) => (a.to_vec(), t.to_vec()),
        _ => return Err("game has no positions".into()),
    };
    let rep = run_replication(&sim, 0).map_err(|e| e.to_string())?;
    let out = Assignment {
        agents,
        targets,
        profile: rep.final_profile.iter().map(|a| a.0).collect(),
        steps_run: rep.steps_run,
        converged_at: rep.converged_at,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Distribution a receiver rebuilds from `(upsilon, kappa)`.
pub fn reconstruct_probs(upsilon: f64, kappa: usize, n_actions: usize, rule: &str) -> Result<Vec<f64>, String> {
    let rule: ReconstructionRule = rule.parse().map_err(|e: dfpsim::Error| e.to_string())?;
    rebuild(upsilon, ActionIndex(kappa), n_actions, rule)
        .map(|f| f.probs().to_vec())
        .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(config_json: &str) -> Result<String, JsValue> {
    simulate_json(config_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn assignment(config_json: &str) -> Result<String, JsValue> {
    assignment_json(config_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn reconstruct(upsilon: f64, kappa: usize, n_actions: usize, rule: &str) -> Result<Vec<f64>, JsValue> {
    reconstruct_probs(upsilon, kappa, n_actions, rule).map_err(|e| JsValue::from_str(&e))
}
