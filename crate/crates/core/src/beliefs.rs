//! Per-agent belief state: own empirical frequency, first-order estimates of
//! every other agent, and second-order beliefs (what each peer is believed to
//! hold about this agent).

use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::strategy::{ActionIndex, MixedStrategy};

/// Slack allowed on `1/K <= upsilon <= 1` for values produced by floating-point updates.
const PAYLOAD_TOL: f64 = 1e-12;

/// How a receiver rebuilds a full distribution from a limited payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionRule {
    /// All mass on the reported action.
    #[default]
    FullSupport,
    /// Reported mass on the reported action, the rest spread evenly.
    UniformRemainder,
}

impl std::str::FromStr for ReconstructionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_support" => Ok(Self::FullSupport),
            "uniform_remainder" => Ok(Self::UniformRemainder),
            other => Err(invalid_config(format!("unknown reconstruction rule {other:?}"))),
        }
    }
}

impl std::fmt::Display for ReconstructionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FullSupport => "full_support",
            Self::UniformRemainder => "uniform_remainder",
        })
    }
}

/// Everything agent `agent_id` knows.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    agent_id: usize,
    last_action: ActionIndex,
    own_freq: MixedStrategy,
    /// Indexed by peer id; the entry at `agent_id` is never read.
    estimates: Vec<MixedStrategy>,
    /// Indexed by peer id; the entry at `agent_id` is never read.
    second_order: Vec<MixedStrategy>,
}

impl AgentState {
    /// Fresh state with every distribution uniform.
    pub fn new(agent_id: usize, n_agents: usize, n_actions: usize, initial_action: ActionIndex) -> Self {
        let u = MixedStrategy::uniform(n_actions);
        Self {
            agent_id,
            last_action: initial_action,
            own_freq: u.clone(),
            estimates: vec![u.clone(); n_agents],
            second_order: vec![u; n_agents],
        }
    }

    /// State consistent with a pure profile being common knowledge: every
    /// distribution is the point mass of the corresponding action.
    pub fn with_point_masses(agent_id: usize, profile: &[ActionIndex], n_actions: usize) -> Self {
        let own = MixedStrategy::point_mass(profile[agent_id], n_actions);
        Self {
            agent_id,
            last_action: profile[agent_id],
            own_freq: own.clone(),
            estimates: profile
                .iter()
                .map(|a| MixedStrategy::point_mass(*a, n_actions))
                .collect(),
            second_order: vec![own; profile.len()],
        }
    }

    /// Assembles a state from explicit parts. `estimates` and `second_order`
    /// are indexed by peer id and must have one entry per agent; the entries
    /// at `agent_id` are ignored.
    pub fn from_parts(
        agent_id: usize,
        last_action: ActionIndex,
        own_freq: MixedStrategy,
        estimates: Vec<MixedStrategy>,
        second_order: Vec<MixedStrategy>,
    ) -> Result<Self> {
        let k = own_freq.len();
        if agent_id >= estimates.len() || estimates.len() != second_order.len() {
            return Err(invalid_input("belief vectors must have one entry per agent"));
        }
        if last_action.0 >= k
            || estimates.iter().chain(&second_order).any(|f| f.len() != k)
        {
            return Err(invalid_input("belief vectors disagree on the action count"));
        }
        Ok(Self {
            agent_id,
            last_action,
            own_freq,
            estimates,
            second_order,
        })
    }

    pub fn agent_id(&self) -> usize {
        self.agent_id
    }

    pub fn n_agents(&self) -> usize {
        self.estimates.len()
    }

    pub fn n_actions(&self) -> usize {
        self.own_freq.len()
    }

    pub fn last_action(&self) -> ActionIndex {
        self.last_action
    }

    pub fn own_freq(&self) -> &MixedStrategy {
        &self.own_freq
    }

    fn check_peer(&self, j: usize) -> Result<()> {
        if j == self.agent_id {
            return Err(invalid_input(format!("agent {j} has no estimate of itself")));
        }
        if j >= self.n_agents() {
            return Err(invalid_input(format!("peer {j} out of range")));
        }
        Ok(())
    }

    pub fn estimate(&self, j: usize) -> Result<&MixedStrategy> {
        self.check_peer(j)?;
        Ok(&self.estimates[j])
    }

    pub fn second_order(&self, j: usize) -> Result<&MixedStrategy> {
        self.check_peer(j)?;
        Ok(&self.second_order[j])
    }

    /// Estimates of all peers in id order.
    pub fn peer_estimates(&self) -> impl Iterator<Item = (usize, &MixedStrategy)> {
        let me = self.agent_id;
        self.estimates.iter().enumerate().filter(move |(j, _)| *j != me)
    }

    pub(crate) fn peer_estimate_refs(&self) -> Vec<&MixedStrategy> {
        self.peer_estimates().map(|(_, f)| f).collect()
    }

    /// Records action `a` as taken and folds it into the empirical frequency
    /// with fading rate `rho`.
    pub fn update_own_frequency(&mut self, a: ActionIndex, rho: f64) -> Result<&MixedStrategy> {
        validate_rho(rho)?;
        if a.0 >= self.n_actions() {
            return Err(invalid_input(format!("action {a} out of range")));
        }
        self.last_action = a;
        self.own_freq.step_toward(a, rho);
        Ok(&self.own_freq)
    }

    /// Distance between the current action and the own empirical frequency.
    pub fn novelty(&self) -> f64 {
        self.own_freq.distance_to_action(self.last_action)
    }

    /// Distance between the own empirical frequency and what peer `j` is
    /// believed to hold about it.
    pub fn belief_similarity(&self, j: usize) -> Result<f64> {
        Ok(self.own_freq.distance(self.second_order(j)?))
    }

    pub(crate) fn belief_similarity_unchecked(&self, j: usize) -> f64 {
        self.own_freq.distance(&self.second_order[j])
    }

    /// Replaces the estimate of peer `j` with a received distribution.
    pub fn apply_received(&mut self, j: usize, reconstructed: MixedStrategy) -> Result<()> {
        self.check_peer(j)?;
        self.check_len(&reconstructed)?;
        self.estimates[j] = reconstructed;
        Ok(())
    }

    /// Replaces the second-order belief about peer `j` after an acknowledgement.
    pub fn apply_ack(&mut self, j: usize, stored: MixedStrategy) -> Result<()> {
        self.check_peer(j)?;
        self.check_len(&stored)?;
        self.second_order[j] = stored;
        Ok(())
    }

    fn check_len(&self, f: &MixedStrategy) -> Result<()> {
        if f.len() != self.n_actions() {
            return Err(invalid_input(format!(
                "distribution has {} entries, expected {}",
                f.len(),
                self.n_actions()
            )));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        let peers = |v: &[MixedStrategy]| {
            v.iter()
                .enumerate()
                .filter(|(j, _)| *j != self.agent_id)
                .map(|(j, f)| PeerBelief {
                    peer: j,
                    probs: f.probs().to_vec(),
                })
                .collect()
        };
        AgentSnapshot {
            agent_id: self.agent_id,
            last_action: self.last_action.0,
            own_freq: self.own_freq.probs().to_vec(),
            estimates: peers(&self.estimates),
            second_order: peers(&self.second_order),
        }
    }
}

/// Serializable view of an [`AgentState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub agent_id: usize,
    pub last_action: usize,
    pub own_freq: Vec<f64>,
    pub estimates: Vec<PeerBelief>,
    pub second_order: Vec<PeerBelief>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerBelief {
    pub peer: usize,
    pub probs: Vec<f64>,
}

pub(crate) fn validate_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid_config(format!("fading rate {rho} outside (0, 1)")));
    }
    Ok(())
}

/// Largest entry of `freq` and its index (smallest index on ties).
pub fn limited_payload(freq: &MixedStrategy) -> (f64, ActionIndex) {
    freq.max_entry()
}

/// Rebuilds a distribution over `k_total` actions whose entry `kappa` is at
/// least `upsilon`.
pub fn reconstruct(
    upsilon: f64,
    kappa: ActionIndex,
    k_total: usize,
    rule: ReconstructionRule,
) -> Result<MixedStrategy> {
    if k_total == 0 || kappa.0 >= k_total {
        return Err(Error::MalformedPayload(format!(
            "index {kappa} out of range for {k_total} actions"
        )));
    }
    let lower = 1.0 / k_total as f64;
    if !upsilon.is_finite() || upsilon < lower - PAYLOAD_TOL || upsilon > 1.0 + PAYLOAD_TOL {
        return Err(Error::MalformedPayload(format!(
            "maximum {upsilon} outside [{lower}, 1]"
        )));
    }
    if k_total == 1 {
        return Ok(MixedStrategy::point_mass(kappa, 1));
    }
    let probs = match rule {
        ReconstructionRule::FullSupport => return Ok(MixedStrategy::point_mass(kappa, k_total)),
        ReconstructionRule::UniformRemainder => {
            let top = upsilon.min(1.0);
            let rest = (1.0 - top) / (k_total - 1) as f64;
            let mut probs = vec![rest; k_total];
            probs[kappa.0] = top;
            probs
        }
    };
    Ok(MixedStrategy::from_raw_unchecked(probs))
}
