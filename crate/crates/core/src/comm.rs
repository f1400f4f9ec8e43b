//! Voluntary communication gate, protocol presets and payloads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::beliefs::{limited_payload, reconstruct, AgentState, ReconstructionRule};
use crate::error::{invalid_config, Error, Result};
use crate::strategy::{ActionIndex, MixedStrategy};

/// Which test decides whether agent `i` sends to agent `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Always,
    /// `eta1 <= h_ii <= eta2` and `h_ij >= eta3`.
    NoveltyBandAndSimilarity,
    /// `h_ii <= eta2`.
    NoveltyUpperOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Full,
    Limited,
}

impl FromStr for PayloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "limited" => Ok(Self::Limited),
            other => Err(invalid_config(format!("unknown payload kind {other:?}"))),
        }
    }
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Limited => "limited",
        })
    }
}

/// Thresholds and message format of an information exchange protocol.
///
/// An absent `eta1` or `eta3` disables that lower bound (treated as 0); an
/// absent `eta2` disables the upper bound (treated as infinity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub eta3: Option<f64>,
    pub payload: PayloadKind,
    pub reconstruction: ReconstructionRule,
    pub gate: GateKind,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2), ("eta3", self.eta3)] {
            if let Some(v) = v {
                if v.is_nan() || v < 0.0 {
                    return Err(invalid_config(format!("{name} = {v} must be non-negative")));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.eta1, self.eta2) {
            if hi <= lo {
                return Err(invalid_config(format!("eta2 = {hi} must exceed eta1 = {lo}")));
            }
        }
        Ok(())
    }

    fn lower_novelty(&self) -> f64 {
        self.eta1.unwrap_or(0.0)
    }

    fn upper_novelty(&self) -> f64 {
        self.eta2.unwrap_or(f64::INFINITY)
    }

    fn min_similarity(&self) -> f64 {
        self.eta3.unwrap_or(0.0)
    }
}

/// Named protocols compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Dfp,
    Vl1,
    Vl2,
    Vl3,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Dfp, Protocol::Vl1, Protocol::Vl2, Protocol::Vl3];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Dfp => "dfp",
            Protocol::Vl1 => "vl1",
            Protocol::Vl2 => "vl2",
            Protocol::Vl3 => "vl3",
        }
    }

    pub fn config(self) -> ProtocolConfig {
        let limited = |eta1, eta2, eta3, gate| ProtocolConfig {
            eta1,
            eta2,
            eta3,
            payload: PayloadKind::Limited,
            reconstruction: ReconstructionRule::default(),
            gate,
        };
        match self {
            Protocol::Dfp => ProtocolConfig {
                eta1: None,
                eta2: None,
                eta3: None,
                payload: PayloadKind::Full,
                reconstruction: ReconstructionRule::default(),
                gate: GateKind::Always,
            },
            Protocol::Vl1 => limited(Some(0.01), Some(0.6), Some(0.01), GateKind::NoveltyBandAndSimilarity),
            Protocol::Vl2 => limited(Some(0.01), None, Some(0.01), GateKind::NoveltyBandAndSimilarity),
            Protocol::Vl3 => limited(None, Some(0.7), None, GateKind::NoveltyUpperOnly),
        }
    }

    /// Inertia probability and fading rate paired with the protocol.
    pub fn dynamics(self) -> Dynamics {
        let (epsilon, rho) = match self {
            Protocol::Vl1 | Protocol::Vl2 => (0.3, 0.6),
            Protocol::Vl3 => (0.1, 0.4),
            Protocol::Dfp => (0.9, 0.1),
        };
        Dynamics { epsilon, rho }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dfp" => Ok(Protocol::Dfp),
            "vl1" => Ok(Protocol::Vl1),
            "vl2" => Ok(Protocol::Vl2),
            "vl3" => Ok(Protocol::Vl3),
            other => Err(invalid_config(format!("unknown protocol {other:?}"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inertia probability `epsilon` and fading rate `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub epsilon: f64,
    pub rho: f64,
}

/// Protocol configuration for a preset name.
pub fn preset(name: &str) -> Result<ProtocolConfig> {
    Ok(name.parse::<Protocol>()?.config())
}

/// Whether an agent with novelty `h_ii` and belief similarity `h_ij` sends to the peer.
pub fn should_transmit(h_ii: f64, h_ij: f64, cfg: &ProtocolConfig) -> bool {
    match cfg.gate {
        GateKind::Always => true,
        GateKind::NoveltyBandAndSimilarity => {
            cfg.lower_novelty() <= h_ii && h_ii <= cfg.upper_novelty() && h_ij >= cfg.min_similarity()
        }
        GateKind::NoveltyUpperOnly => h_ii <= cfg.upper_novelty(),
    }
}

/// Message content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Full(MixedStrategy),
    Limited { upsilon: f64, kappa: ActionIndex },
}

impl Payload {
    /// The distribution a receiver stores for this payload.
    pub fn decode(&self, n_actions: usize, rule: ReconstructionRule) -> Result<MixedStrategy> {
        match self {
            Payload::Full(f) => Ok(f.clone()),
            Payload::Limited { upsilon, kappa } => reconstruct(*upsilon, *kappa, n_actions, rule),
        }
    }
}

/// What agent `state` sends under `cfg`.
pub fn build_payload(state: &AgentState, cfg: &ProtocolConfig) -> Payload {
    match cfg.payload {
        PayloadKind::Full => Payload::Full(state.own_freq().clone()),
        PayloadKind::Limited => {
            let (upsilon, kappa) = limited_payload(state.own_freq());
            Payload::Limited { upsilon, kappa }
        }
    }
}
