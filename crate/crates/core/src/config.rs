//! Flat key-value experiment configuration.
//!
//! ```toml
//! protocol = "vl1"        # dfp | vl1 | vl2 | vl3 | custom
//! n_agents = 20
//! n_targets = 20
//! p_comm = 0.6            # or a path to a matrix file
//! beta_ack = 0.9
//! t_final = 10000
//! replications = 100
//! seed = 7
//! ```
//!
//! A preset fills thresholds, payload and dynamics; any explicit key
//! overrides it. `custom` starts from `vl1` with every threshold disabled
//! unless given.
//!
//! Matrix files hold whitespace- or comma-separated rows. Several matrices
//! separated by blank lines form a schedule cycled step by step.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::beliefs::ReconstructionRule;
use crate::comm::{GateKind, PayloadKind, Protocol, ProtocolConfig};
use crate::engine::{
    GameSource, InitialBeliefs, InitialProfile, SimConfig, DEFAULT_BETA_ACK, DEFAULT_P_COMM, DEFAULT_T_FINAL,
};
use crate::error::{invalid_config, Error, Result};
use crate::game::{GameSpec, MatrixGame, TargetAssignmentGame};
use crate::netsim::{LinkModel, LinkSchedule, PairMatrix};

pub const DEFAULT_N_AGENTS: usize = 20;
pub const DEFAULT_REPLICATIONS: u64 = 100;
pub const DEFAULT_PROTOCOL: &str = "vl1";

/// A probability given inline or as a matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbabilitySpec {
    Scalar(f64),
    File(PathBuf),
}

/// Every configuration key; absent keys take defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n_agents: Option<usize>,
    pub n_targets: Option<usize>,
    pub protocol: Option<String>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub eta3: Option<f64>,
    pub gate: Option<GateKind>,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub p_comm: Option<ProbabilitySpec>,
    pub beta_ack: Option<ProbabilitySpec>,
    pub t_final: Option<u64>,
    pub replications: Option<u64>,
    pub seed: Option<u64>,
    pub record_every: Option<u64>,
    pub payload: Option<PayloadKind>,
    pub reconstruction: Option<ReconstructionRule>,
    pub second_order_stores_reconstruction: Option<bool>,
    pub early_stop_window: Option<u64>,
    pub game_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl ConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid_config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| invalid_config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for spec in [&mut cfg.p_comm, &mut cfg.beta_ack].into_iter().flatten() {
            if let ProbabilitySpec::File(p) = spec {
                rebase(p);
            }
        }
        if let Some(p) = cfg.game_file.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.out_dir.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    /// Keys set in `top` replace those in `self`.
    pub fn overlay(mut self, top: ConfigFile) -> Self {
        overlay_fields!(self, top; n_agents, n_targets, protocol, eta1, eta2, eta3, gate, rho, epsilon,
            p_comm, beta_ack, t_final, replications, seed, record_every, payload, reconstruction,
            second_order_stores_reconstruction, early_stop_window, game_file, out_dir);
        self
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Builds the simulation config and the fully populated key set it came from.
    pub fn resolve(&self) -> Result<(SimConfig, ConfigFile)> {
        let protocol_name = self.protocol.as_deref().unwrap_or(DEFAULT_PROTOCOL);
        let (base, mut protocol) = if protocol_name == "custom" {
            let mut p = Protocol::Vl1.config();
            (p.eta1, p.eta2, p.eta3) = (None, None, None);
            (Protocol::Vl1, p)
        } else {
            let base: Protocol = protocol_name.parse()?;
            (base, base.config())
        };
        overlay_thresholds(&mut protocol, self);
        let dynamics = base.dynamics();

        let game = match &self.game_file {
            Some(path) => {
                let game = load_game(path)?;
                for (key, given, actual) in [
                    ("n_agents", self.n_agents, game.n_agents()),
                    ("n_targets", self.n_targets, game.n_actions()),
                ] {
                    if given.is_some_and(|g| g != actual) {
                        return Err(invalid_config(format!("{key} disagrees with game_file ({actual})")));
                    }
                }
                GameSource::Fixed(Arc::new(game))
            }
            None => {
                let n_agents = self.n_agents.unwrap_or(DEFAULT_N_AGENTS);
                GameSource::RandomTargets {
                    n_agents,
                    n_targets: self.n_targets.unwrap_or(n_agents),
                }
            }
        };
        let n = game.n_agents();
        let p_comm = self.p_comm.clone().unwrap_or(ProbabilitySpec::Scalar(DEFAULT_P_COMM));
        let beta_ack = self.beta_ack.clone().unwrap_or(ProbabilitySpec::Scalar(DEFAULT_BETA_ACK));
        let links = build_schedule(n, &p_comm, &beta_ack)?;

        let sim = SimConfig {
            game,
            protocol,
            rho: self.rho.unwrap_or(dynamics.rho),
            epsilon: self.epsilon.unwrap_or(dynamics.epsilon),
            links,
            t_final: self.t_final.unwrap_or(DEFAULT_T_FINAL),
            replications: self.replications.unwrap_or(DEFAULT_REPLICATIONS),
            seed: self.seed.unwrap_or(0),
            record_every: self.record_every.unwrap_or(1),
            early_stop_window: self.early_stop_window,
            second_order_stores_reconstruction: self.second_order_stores_reconstruction.unwrap_or(false),
            initial_profile: InitialProfile::Random,
            initial_beliefs: InitialBeliefs::Uniform,
            freeze_actions: false,
            keep_final_states: false,
        };
        sim.validate()?;

        let effective = ConfigFile {
            n_agents: Some(n),
            n_targets: Some(sim.game.n_actions()),
            protocol: Some(protocol_name.to_string()),
            eta1: sim.protocol.eta1,
            eta2: sim.protocol.eta2,
            eta3: sim.protocol.eta3,
            gate: Some(sim.protocol.gate),
            rho: Some(sim.rho),
            epsilon: Some(sim.epsilon),
            p_comm: Some(p_comm),
            beta_ack: Some(beta_ack),
            t_final: Some(sim.t_final),
            replications: Some(sim.replications),
            seed: Some(sim.seed),
            record_every: Some(sim.record_every),
            payload: Some(sim.protocol.payload),
            reconstruction: Some(sim.protocol.reconstruction),
            second_order_stores_reconstruction: Some(sim.second_order_stores_reconstruction),
            early_stop_window: sim.early_stop_window,
            game_file: self.game_file.clone(),
            out_dir: self.out_dir.clone(),
        };
        Ok((sim, effective))
    }
}

fn overlay_thresholds(protocol: &mut ProtocolConfig, cfg: &ConfigFile) {
    if cfg.eta1.is_some() {
        protocol.eta1 = cfg.eta1;
    }
    if cfg.eta2.is_some() {
        protocol.eta2 = cfg.eta2;
    }
    if cfg.eta3.is_some() {
        protocol.eta3 = cfg.eta3;
    }
    if let Some(g) = cfg.gate {
        protocol.gate = g;
    }
    if let Some(p) = cfg.payload {
        protocol.payload = p;
    }
    if let Some(r) = cfg.reconstruction {
        protocol.reconstruction = r;
    }
}

/// Reads a game file: a target game (`distances`, or `agent_positions` and
/// `target_positions`) or a matrix game (`n_actions` plus `[[utility]]`).
pub fn load_game(path: &Path) -> Result<GameSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid_config(format!("cannot read game file {}: {e}", path.display())))?;
    parse_game(&text)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetGameFile {
    distances: Option<Vec<Vec<f64>>>,
    agent_positions: Option<Vec<[f64; 2]>>,
    target_positions: Option<Vec<[f64; 2]>>,
}

pub fn parse_game(text: &str) -> Result<GameSpec> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if table.contains_key("n_actions") {
        return Ok(MatrixGame::from_toml_str(text)?.into());
    }
    let file: TargetGameFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let game = match file {
        TargetGameFile {
            distances: Some(d),
            agent_positions: None,
            target_positions: None,
        } => TargetAssignmentGame::from_distances(d)?,
        TargetGameFile {
            distances: None,
            agent_positions: Some(a),
            target_positions: Some(t),
        } => TargetAssignmentGame::from_positions(a, t)?,
        _ => {
            return Err(Error::Parse(
                "game file needs either distances or both agent_positions and target_positions".into(),
            ))
        }
    };
    Ok(game.into())
}

/// Parses one or more blank-line separated square matrices.
pub fn parse_matrices(text: &str) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut blocks = Vec::new();
    let mut current: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().map(|l| l.split('#').next().unwrap_or("").trim()) {
        if line.is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        current.push(row);
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    if blocks.is_empty() {
        return Err(Error::Parse("matrix file is empty".into()));
    }
    Ok(blocks)
}

fn load_pair_matrices(n: usize, spec: &ProbabilitySpec) -> Result<Vec<PairMatrix>> {
    match spec {
        ProbabilitySpec::Scalar(v) => Ok(vec![PairMatrix::constant(n, *v)]),
        ProbabilitySpec::File(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| invalid_config(format!("cannot read matrix file {}: {e}", path.display())))?;
            parse_matrices(&text)?
                .into_iter()
                .map(|rows| {
                    let m = PairMatrix::from_rows(rows)?;
                    if m.size() != n {
                        return Err(invalid_config(format!(
                            "matrix in {} is {}x{}, expected {n}x{n}",
                            path.display(),
                            m.size(),
                            m.size()
                        )));
                    }
                    Ok(m)
                })
                .collect()
        }
    }
}

/// Pairs link and acknowledgement matrices step by step. A single matrix is
/// broadcast against a schedule; two schedules must have the same length.
pub fn build_schedule(n: usize, p_comm: &ProbabilitySpec, beta_ack: &ProbabilitySpec) -> Result<LinkSchedule> {
    let p = load_pair_matrices(n, p_comm)?;
    let b = load_pair_matrices(n, beta_ack)?;
    let len = match (p.len(), b.len()) {
        (x, y) if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        (x, y) => {
            return Err(invalid_config(format!(
                "p_comm schedule has {x} steps, beta_ack schedule has {y}"
            )))
        }
    };
    let models = (0..len)
        .map(|t| LinkModel::new(p[t % p.len()].clone(), b[t % b.len()].clone()))
        .collect::<Result<Vec<_>>>()?;
    LinkSchedule::cyclic(models)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_paper_setup() {
        let (sim, eff) = ConfigFile::default().resolve().unwrap();
        assert_eq!(sim.game, GameSource::RandomTargets { n_agents: 20, n_targets: 20 });
        assert_eq!(sim.protocol, Protocol::Vl1.config());
        assert_eq!((sim.rho, sim.epsilon), (0.6, 0.3));
        assert_eq!(sim.t_final, 10_000);
        assert_eq!(eff.p_comm, Some(ProbabilitySpec::Scalar(0.6)));
        assert_eq!(eff.eta2, Some(0.6));
    }

    #[test]
    fn keys_override_preset() {
        let cfg = ConfigFile::from_toml_str(
            "protocol = \"vl2\"\neta3 = 0.05\nrho = 0.8\nreconstruction = \"uniform_remainder\"\n",
        )
        .unwrap();
        let (sim, _) = cfg.resolve().unwrap();
        assert_eq!(sim.protocol.eta1, Some(0.01));
        assert_eq!(sim.protocol.eta2, None);
        assert_eq!(sim.protocol.eta3, Some(0.05));
        assert_eq!(sim.protocol.reconstruction, ReconstructionRule::UniformRemainder);
        assert_eq!(sim.rho, 0.8);
        assert_eq!(sim.epsilon, 0.3);
    }

    #[test]
    fn custom_starts_open() {
        let cfg = ConfigFile::from_toml_str("protocol = \"custom\"\neta2 = 0.9\n").unwrap();
        let (sim, _) = cfg.resolve().unwrap();
        assert_eq!((sim.protocol.eta1, sim.protocol.eta2, sim.protocol.eta3), (None, Some(0.9), None));
        assert_eq!(sim.protocol.gate, GateKind::NoveltyBandAndSimilarity);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ConfigFile::from_toml_str("n_agent = 3").is_err());
        assert!(ConfigFile::from_toml_str("protocol = \"vl9\"").unwrap().resolve().is_err());
        assert!(ConfigFile::from_toml_str("rho = 1.5").unwrap().resolve().is_err());
        assert!(ConfigFile::from_toml_str("record_every = 0").unwrap().resolve().is_err());
    }

    #[test]
    fn overlay_prefers_top() {
        let base = ConfigFile::from_toml_str("seed = 1\nrho = 0.5\n").unwrap();
        let top = ConfigFile {
            seed: Some(9),
            ..ConfigFile::default()
        };
        let merged = base.overlay(top);
        assert_eq!((merged.seed, merged.rho), (Some(9), Some(0.5)));
    }

    #[test]
    fn effective_config_round_trips() {
        let (_, eff) = ConfigFile::default().resolve().unwrap();
        let text = eff.to_toml_string();
        let back = ConfigFile::from_toml_str(&text).unwrap();
        assert_eq!(back, eff);
        assert_eq!(back.resolve().unwrap().1, eff);
    }

    #[test]
    fn matrix_blocks() {
        let blocks = parse_matrices("0 0.5\n0.5 0\n\n0, 0.7\n0.7, 0 # second step\n").unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1][0], vec![0.0, 0.7]);
        assert!(parse_matrices("\n\n").is_err());
        assert!(parse_matrices("0 x").is_err());
    }

    #[test]
    fn game_file_formats() {
        let g = parse_game("distances = [[1.0, 2.0], [2.0, 1.0]]").unwrap();
        assert_eq!((g.n_agents(), g.n_actions()), (2, 2));
        let g = parse_game("agent_positions = [[0.0, 0.0]]\ntarget_positions = [[3.0, 4.0], [0.0, 1.0]]").unwrap();
        assert_eq!(g.as_target_assignment().unwrap().distance(0, 0), 5.0);
        let pennies = MatrixGame::from_fn(2, 2, |i, p| if (i == 0) == (p[0] == p[1]) { 1.0 } else { -1.0 }).unwrap();
        let g = parse_game(&pennies.to_toml_string()).unwrap();
        assert_eq!(g, GameSpec::Matrix(pennies));
        assert!(parse_game("distances = [[1.0]]\nagent_positions = [[0.0, 0.0]]").is_err());
    }
}
