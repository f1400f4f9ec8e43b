//! Synchronous rounds of decentralized fictitious play with inertia.
//!
//! One step runs, in order:
//! 1. inertia draws and best responses (against estimates from the previous step),
//! 2. empirical frequency updates,
//! 3. gate evaluation for every ordered pair,
//! 4. link draws for gated pairs in `(sender, receiver)` order,
//! 5. reconstruction and estimate replacement for delivered messages,
//! 6. acknowledgement draws for delivered pairs in `(receiver, sender)` order,
//! 7. second-order updates for acknowledged pairs,
//! 8. statistics.
//!
//! All messages carry the sender's state as of step 2, so nothing received in
//! a step influences what is sent in the same step.

use std::sync::Arc;

use serde::Serialize;

use crate::beliefs::{validate_rho, AgentSnapshot, AgentState};
use crate::comm::{build_payload, should_transmit, Dynamics, GateKind, Protocol, ProtocolConfig};
use crate::error::{invalid_config, invalid_input, Result};
use crate::game::{argmax_set, generate_scenario, GameSpec};
use crate::metrics::{belief_disagreement, coverage_count, dist_to_nearest_pure_ne, TraceRecord};
use crate::netsim::{sample_ack, sample_link, LinkModel, LinkSchedule, Purpose, RngStream};
use crate::oracle::is_pure_ne;
use crate::strategy::{ActionIndex, MixedStrategy};

/// Where each replication's game comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GameSource {
    /// The same game for every replication.
    Fixed(Arc<GameSpec>),
    /// A fresh target-assignment scenario per replication, drawn from the
    /// replication's scenario stream.
    RandomTargets { n_agents: usize, n_targets: usize },
}

impl GameSource {
    pub fn n_agents(&self) -> usize {
        match self {
            GameSource::Fixed(g) => g.n_agents(),
            GameSource::RandomTargets { n_agents, .. } => *n_agents,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            GameSource::Fixed(g) => g.n_actions(),
            GameSource::RandomTargets { n_targets, .. } => *n_targets,
        }
    }

    pub fn instantiate(&self, seed: u64, rep_index: u64) -> Result<Arc<GameSpec>> {
        match self {
            GameSource::Fixed(g) => Ok(Arc::clone(g)),
            GameSource::RandomTargets { n_agents, n_targets } => {
                let mut rng = RngStream::new(seed, rep_index, Purpose::Scenario);
                Ok(Arc::new(generate_scenario(*n_agents, *n_targets, &mut rng)?.into()))
            }
        }
    }
}

/// Starting action profile `a(0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    /// Each agent's action drawn uniformly from the replication's init stream.
    Random,
    Fixed(Vec<ActionIndex>),
}

/// Starting beliefs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialBeliefs {
    /// Every distribution uniform.
    Uniform,
    /// Every distribution the point mass of the matching initial action.
    PointMass,
}

/// Full description of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub game: GameSource,
    pub protocol: ProtocolConfig,
    pub rho: f64,
    pub epsilon: f64,
    pub links: LinkSchedule,
    pub t_final: u64,
    pub replications: u64,
    pub seed: u64,
    pub record_every: u64,
    /// Stop once the profile is a pure equilibrium that has not changed for
    /// this many steps.
    pub early_stop_window: Option<u64>,
    /// Store the sender's reconstructed payload instead of its exact
    /// frequency as the second-order belief after an acknowledgement.
    pub second_order_stores_reconstruction: bool,
    pub initial_profile: InitialProfile,
    pub initial_beliefs: InitialBeliefs,
    /// Keep every agent on its initial action; beliefs and communication still evolve.
    pub freeze_actions: bool,
    /// Keep the final agent states in each [`ReplicationResult`].
    pub keep_final_states: bool,
}

/// Default link success probability.
pub const DEFAULT_P_COMM: f64 = 0.6;
/// Default acknowledgement success probability.
pub const DEFAULT_BETA_ACK: f64 = 0.9;
/// Default horizon.
pub const DEFAULT_T_FINAL: u64 = 10_000;
/// Default early-stop window when early stopping is requested without a length.
pub const DEFAULT_EARLY_STOP_WINDOW: u64 = 100;

impl SimConfig {
    /// Preset protocol with its paired dynamics, default links and horizon,
    /// one replication, seed 0.
    pub fn preset(game: GameSource, protocol: Protocol) -> Result<Self> {
        let Dynamics { epsilon, rho } = protocol.dynamics();
        let n = game.n_agents();
        Ok(Self {
            game,
            protocol: protocol.config(),
            rho,
            epsilon,
            links: LinkSchedule::constant(LinkModel::uniform(n, DEFAULT_P_COMM, DEFAULT_BETA_ACK)?),
            t_final: DEFAULT_T_FINAL,
            replications: 1,
            seed: 0,
            record_every: 1,
            early_stop_window: None,
            second_order_stores_reconstruction: false,
            initial_profile: InitialProfile::Random,
            initial_beliefs: InitialBeliefs::Uniform,
            freeze_actions: false,
            keep_final_states: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        validate_rho(self.rho)?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid_config(format!("inertia probability {} outside (0, 1)", self.epsilon)));
        }
        if self.replications == 0 {
            return Err(invalid_config("replications must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(invalid_config("record_every must be at least 1"));
        }
        if self.early_stop_window == Some(0) {
            return Err(invalid_config("early_stop_window must be at least 1"));
        }
        self.protocol.validate()?;
        let n = self.game.n_agents();
        if n == 0 || self.game.n_actions() == 0 {
            return Err(invalid_config("game needs at least one agent and one action"));
        }
        if self.links.n_agents() != n {
            return Err(invalid_config(format!(
                "link model covers {} agents, game has {n}",
                self.links.n_agents()
            )));
        }
        if n > 1 {
            // learning a static peer needs every link and acknowledgement to succeed sometimes
            for model in self.links.models() {
                let (p, beta) = model.min_probabilities();
                if p <= 0.0 {
                    return Err(invalid_config("every p_comm entry must be positive"));
                }
                if self.protocol.gate == GateKind::NoveltyBandAndSimilarity && beta <= 0.0 {
                    return Err(invalid_config(
                        "every beta_ack entry must be positive when the gate uses second-order beliefs",
                    ));
                }
            }
        }
        if let InitialProfile::Fixed(profile) = &self.initial_profile {
            if profile.len() != n || profile.iter().any(|a| a.0 >= self.game.n_actions()) {
                return Err(invalid_config("initial profile does not fit the game"));
            }
        }
        Ok(())
    }
}

/// Random streams of one replication.
#[derive(Debug, Clone)]
pub struct Streams {
    pub inertia: RngStream,
    pub tie_break: RngStream,
    pub link: RngStream,
    pub ack: RngStream,
}

impl Streams {
    pub fn new(seed: u64, rep_index: u64) -> Self {
        Self {
            inertia: RngStream::new(seed, rep_index, Purpose::Inertia),
            tie_break: RngStream::new(seed, rep_index, Purpose::TieBreak),
            link: RngStream::new(seed, rep_index, Purpose::Link),
            ack: RngStream::new(seed, rep_index, Purpose::Ack),
        }
    }
}

/// The maximizers of expected utility for agent `state` given its estimates.
pub fn best_response_set(state: &AgentState, game: &GameSpec) -> Result<Vec<ActionIndex>> {
    let values = game.expected_utilities(state.agent_id(), &state.peer_estimate_refs())?;
    Ok(argmax_set(&values))
}

/// With probability `epsilon` repeats the last action; otherwise picks a best
/// response to the current estimates, breaking ties uniformly at random.
///
/// Consumes exactly one inertia draw, and one tie-break draw only when the
/// best response is not unique.
pub fn best_response_with_inertia(
    state: &AgentState,
    game: &GameSpec,
    epsilon: f64,
    inertia: &mut RngStream,
    tie_break: &mut RngStream,
) -> Result<ActionIndex> {
    if inertia.bernoulli(epsilon) {
        return Ok(state.last_action());
    }
    let best = best_response_set(state, game)?;
    Ok(match best.len() {
        1 => best[0],
        n => best[tie_break.index(n)],
    })
}

/// Counters of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StepStats {
    pub step: u64,
    pub attempts: u64,
    pub deliveries: u64,
    pub acks: u64,
    pub action_changes: u64,
}

/// Mutable state of one replication.
#[derive(Debug, Clone)]
pub struct World {
    game: Arc<GameSpec>,
    protocol: ProtocolConfig,
    rho: f64,
    epsilon: f64,
    links: LinkSchedule,
    second_order_stores_reconstruction: bool,
    freeze_actions: bool,
    agents: Vec<AgentState>,
    streams: Streams,
    t: u64,
}

impl World {
    pub fn new(cfg: &SimConfig, rep_index: u64) -> Result<Self> {
        cfg.validate()?;
        let game = cfg.game.instantiate(cfg.seed, rep_index)?;
        let (n, k) = (game.n_agents(), game.n_actions());
        let profile = match &cfg.initial_profile {
            InitialProfile::Fixed(p) => p.clone(),
            InitialProfile::Random => {
                let mut rng = RngStream::new(cfg.seed, rep_index, Purpose::InitialProfile);
                (0..n).map(|_| ActionIndex(rng.index(k))).collect()
            }
        };
        let agents = (0..n)
            .map(|i| match cfg.initial_beliefs {
                InitialBeliefs::Uniform => AgentState::new(i, n, k, profile[i]),
                InitialBeliefs::PointMass => AgentState::with_point_masses(i, &profile, k),
            })
            .collect();
        Ok(Self {
            game,
            protocol: cfg.protocol.clone(),
            rho: cfg.rho,
            epsilon: cfg.epsilon,
            links: cfg.links.clone(),
            second_order_stores_reconstruction: cfg.second_order_stores_reconstruction,
            freeze_actions: cfg.freeze_actions,
            agents,
            streams: Streams::new(cfg.seed, rep_index),
            t: 0,
        })
    }

    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentState] {
        &mut self.agents
    }

    pub fn streams(&self) -> &Streams {
        &self.streams
    }

    /// Last completed step (0 before the first step).
    pub fn step_index(&self) -> u64 {
        self.t
    }

    pub fn profile(&self) -> Vec<ActionIndex> {
        self.agents.iter().map(AgentState::last_action).collect()
    }

    /// Runs one synchronous round.
    pub fn run_step(&mut self) -> Result<StepStats> {
        let t = self.t + 1;
        let n = self.agents.len();
        let k = self.game.n_actions();
        let mut stats = StepStats {
            step: t,
            ..StepStats::default()
        };

        // 1. act
        let actions: Vec<ActionIndex> = if self.freeze_actions {
            self.profile()
        } else {
            let mut out = Vec::with_capacity(n);
            for state in &self.agents {
                out.push(best_response_with_inertia(
                    state,
                    &self.game,
                    self.epsilon,
                    &mut self.streams.inertia,
                    &mut self.streams.tie_break,
                )?);
            }
            out
        };

        // 2. own frequencies
        for (state, a) in self.agents.iter_mut().zip(&actions) {
            if state.last_action() != *a {
                stats.action_changes += 1;
            }
            state.update_own_frequency(*a, self.rho)?;
        }

        // 3. gates
        let mut attempted: Vec<(usize, usize)> = Vec::new();
        for (i, state) in self.agents.iter().enumerate() {
            let h_ii = state.novelty();
            for j in (0..n).filter(|&j| j != i) {
                let h_ij = match self.protocol.gate {
                    GateKind::NoveltyBandAndSimilarity => state.belief_similarity_unchecked(j),
                    GateKind::Always | GateKind::NoveltyUpperOnly => 0.0,
                };
                if should_transmit(h_ii, h_ij, &self.protocol) {
                    attempted.push((i, j));
                }
            }
        }
        stats.attempts = attempted.len() as u64;
        if attempted.is_empty() {
            self.t = t;
            return Ok(stats);
        }

        // 4. links
        let links = self.links.at_step(t);
        let mut delivered = Vec::with_capacity(attempted.len());
        for &(i, j) in &attempted {
            if sample_link(links, i, j, &mut self.streams.link)? {
                delivered.push((i, j));
            }
        }
        stats.deliveries = delivered.len() as u64;

        // 5. receive; one decoded payload per sender
        let mut decoded: Vec<Option<MixedStrategy>> = vec![None; n];
        for &(i, _) in &delivered {
            if decoded[i].is_none() {
                let payload = build_payload(&self.agents[i], &self.protocol);
                decoded[i] = Some(payload.decode(k, self.protocol.reconstruction)?);
            }
        }
        for &(i, j) in &delivered {
            let phi = decoded[i].clone().expect("decoded above");
            self.agents[j].apply_received(i, phi)?;
        }

        // 6. acknowledgements, receiver-major
        delivered.sort_unstable_by_key(|&(i, j)| (j, i));
        let mut acked = Vec::with_capacity(delivered.len());
        for &(i, j) in &delivered {
            if sample_ack(links, j, i, true, &mut self.streams.ack)? {
                acked.push((i, j));
            }
        }
        stats.acks = acked.len() as u64;

        // 7. second-order beliefs
        for (i, j) in acked {
            let stored = if self.second_order_stores_reconstruction {
                decoded[i].clone().expect("acked pairs were delivered")
            } else {
                self.agents[i].own_freq().clone()
            };
            self.agents[i].apply_ack(j, stored)?;
        }

        self.t = t;
        Ok(stats)
    }

    /// Metric snapshot of the current state.
    pub fn record(&self, link_utilization: f64) -> TraceRecord {
        let mean_dist_ne = self
            .game
            .as_target_assignment()
            .and_then(|g| dist_to_nearest_pure_ne(&self.agents, g).ok())
            .unwrap_or(f64::NAN);
        TraceRecord {
            step: self.t,
            mean_dist_ne,
            mean_belief_err: belief_disagreement(&self.agents).unwrap_or(f64::NAN),
            link_utilization,
            coverage: coverage_count(&self.profile()),
        }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub rep_index: u64,
    pub trace: Vec<TraceRecord>,
    pub final_profile: Vec<ActionIndex>,
    /// First step of the final unchanged stretch, when the final profile is a
    /// pure equilibrium.
    pub converged_at: Option<u64>,
    pub steps_run: u64,
    pub attempts_total: u64,
    pub successes_total: u64,
    pub acks_total: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_states: Option<Vec<AgentSnapshot>>,
}

/// Runs one replication to the horizon or until early stop.
pub fn run_replication(cfg: &SimConfig, rep_index: u64) -> Result<ReplicationResult> {
    let mut world = World::new(cfg, rep_index)?;
    let n = world.agents.len();
    let pairs = (n * n.saturating_sub(1)) as f64;

    let mut trace = Vec::with_capacity((cfg.t_final / cfg.record_every + 1) as usize);
    let (mut attempts_total, mut successes_total, mut acks_total) = (0u64, 0u64, 0u64);
    let mut window_attempts = 0u64;
    let mut window_steps = 0u64;

    // first step of the current unchanged stretch of the profile
    let mut stable_since = 1u64;
    let mut profile_is_ne = is_pure_ne(&world.game, &world.profile());

    while world.t < cfg.t_final {
        let stats = world.run_step()?;
        let t = stats.step;
        attempts_total += stats.attempts;
        successes_total += stats.deliveries;
        acks_total += stats.acks;
        window_attempts += stats.attempts;
        window_steps += 1;

        if stats.action_changes > 0 {
            stable_since = t;
            profile_is_ne = is_pure_ne(&world.game, &world.profile());
        }
        let stop = matches!(cfg.early_stop_window, Some(w) if profile_is_ne && t + 1 - stable_since >= w);

        if t % cfg.record_every == 0 || t == cfg.t_final || stop {
            let utilization = if pairs > 0.0 {
                window_attempts as f64 / (pairs * window_steps as f64)
            } else {
                0.0
            };
            trace.push(world.record(utilization));
            window_attempts = 0;
            window_steps = 0;
        }
        if stop {
            break;
        }
    }

    let final_profile = world.profile();
    let converged_at = profile_is_ne.then_some(stable_since.min(world.t.max(1)));
    let final_states = cfg
        .keep_final_states
        .then(|| world.agents.iter().map(AgentState::snapshot).collect());
    Ok(ReplicationResult {
        rep_index,
        trace,
        final_profile,
        converged_at: if world.t == 0 { profile_is_ne.then_some(0) } else { converged_at },
        steps_run: world.t,
        attempts_total,
        successes_total,
        acks_total,
        final_states,
    })
}

/// Per-step means across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateRecord {
    pub step: u64,
    pub mean_dist_ne: f64,
    pub mean_belief_err: f64,
    pub link_utilization: f64,
    pub coverage: f64,
    /// Replications that contributed to this row.
    pub replications: u64,
}

/// Aggregate traces plus the individual replication results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub aggregate: Vec<AggregateRecord>,
    pub replications: Vec<ReplicationResult>,
}

/// Means row `r` of each trace over the replications that reached it,
/// summing in replication order.
pub fn aggregate(results: &[ReplicationResult]) -> Vec<AggregateRecord> {
    let rows = results.iter().map(|r| r.trace.len()).max().unwrap_or(0);
    (0..rows)
        .map(|row| {
            let present: Vec<&TraceRecord> = results.iter().filter_map(|r| r.trace.get(row)).collect();
            let m = present.len() as f64;
            let mean = |f: fn(&TraceRecord) -> f64| present.iter().map(|r| f(r)).sum::<f64>() / m;
            AggregateRecord {
                step: present[0].step,
                mean_dist_ne: mean(|r| r.mean_dist_ne),
                mean_belief_err: mean(|r| r.mean_belief_err),
                link_utilization: mean(|r| r.link_utilization),
                coverage: mean(|r| r.coverage as f64),
                replications: present.len() as u64,
            }
        })
        .collect()
}

/// Runs every replication, in parallel when the `parallel` feature is on.
pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentResult> {
    run_experiment_with_jobs(cfg, None)
}

/// Like [`run_experiment`] with at most `jobs` worker threads (`None` uses
/// the default pool, `Some(1)` runs serially).
pub fn run_experiment_with_jobs(cfg: &SimConfig, jobs: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    if jobs == Some(0) {
        return Err(invalid_input("jobs must be at least 1"));
    }
    let replications = run_all(cfg, jobs)?;
    Ok(ExperimentResult {
        aggregate: aggregate(&replications),
        replications,
    })
}

#[cfg(feature = "parallel")]
fn run_all(cfg: &SimConfig, jobs: Option<usize>) -> Result<Vec<ReplicationResult>> {
    use rayon::prelude::*;

    if jobs == Some(1) || cfg.replications == 1 {
        return (0..cfg.replications).map(|r| run_replication(cfg, r)).collect();
    }
    let run = || {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replication(cfg, r))
            .collect::<Result<Vec<_>>>()
    };
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| invalid_config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_all(cfg: &SimConfig, _jobs: Option<usize>) -> Result<Vec<ReplicationResult>> {
    (0..cfg.replications).map(|r| run_replication(cfg, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::TargetAssignmentGame;

    fn fixed(rows: Vec<Vec<f64>>) -> GameSource {
        GameSource::Fixed(Arc::new(TargetAssignmentGame::from_distances(rows).unwrap().into()))
    }

    fn symmetric_pair() -> GameSpec {
        TargetAssignmentGame::from_distances(vec![vec![1.0, 1.0], vec![1.0, 1.0]])
            .unwrap()
            .into()
    }

    #[test]
    fn full_inertia_repeats() {
        let g = symmetric_pair();
        let s = AgentState::new(0, 2, 2, ActionIndex(1));
        let mut inertia = RngStream::new(0, 0, Purpose::Inertia);
        let mut tie = RngStream::new(0, 0, Purpose::TieBreak);
        for _ in 0..100 {
            assert_eq!(
                best_response_with_inertia(&s, &g, 1.0, &mut inertia, &mut tie).unwrap(),
                ActionIndex(1)
            );
        }
        assert_eq!(tie.draws(), 0);
    }

    #[test]
    fn symmetric_ties_split_evenly() {
        // both targets give (1 - 1/2) / 1 = 0.5 in expectation
        let g = symmetric_pair();
        let s = AgentState::new(0, 2, 2, ActionIndex(0));
        assert_eq!(best_response_set(&s, &g).unwrap().len(), 2);
        let mut inertia = RngStream::new(1, 0, Purpose::Inertia);
        let mut tie = RngStream::new(1, 0, Purpose::TieBreak);
        let ones = (0..10_000)
            .filter(|_| best_response_with_inertia(&s, &g, 0.0, &mut inertia, &mut tie).unwrap() == ActionIndex(1))
            .count();
        let rate = ones as f64 / 10_000.0;
        assert!((rate - 0.5).abs() < 0.02, "rate {rate}");
        assert_eq!(tie.draws(), 10_000);
    }

    #[test]
    fn point_mass_best_response_is_the_equilibrium_action() {
        let g: GameSpec = TargetAssignmentGame::from_distances(vec![
            vec![2.0, 3.0, 4.0],
            vec![3.0, 2.0, 5.0],
            vec![6.0, 2.5, 3.0],
        ])
        .unwrap()
        .into();
        let ne = [ActionIndex(0), ActionIndex(1), ActionIndex(2)];
        for i in 0..3 {
            let s = AgentState::with_point_masses(i, &ne, 3);
            let mut inertia = RngStream::new(2, 0, Purpose::Inertia);
            let mut tie = RngStream::new(2, 0, Purpose::TieBreak);
            let a = best_response_with_inertia(&s, &g, 0.0, &mut inertia, &mut tie).unwrap();
            assert_eq!(a, ne[i]);
            assert_eq!(crate::oracle::best_response_exact(&g, i, &ne).unwrap(), vec![ne[i]]);
        }
    }

    fn base(protocol: Protocol) -> SimConfig {
        let mut cfg = SimConfig::preset(GameSource::RandomTargets { n_agents: 4, n_targets: 4 }, protocol).unwrap();
        cfg.t_final = 50;
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn dfp_attempts_every_pair() {
        let cfg = base(Protocol::Dfp);
        let mut w = World::new(&cfg, 0).unwrap();
        for _ in 0..10 {
            assert_eq!(w.run_step().unwrap().attempts, 12);
        }
    }

    #[test]
    fn closed_gates_consume_no_link_or_ack_draws() {
        let mut cfg = base(Protocol::Vl1);
        cfg.protocol.eta1 = Some(5.0);
        cfg.protocol.eta2 = Some(6.0);
        let mut w = World::new(&cfg, 0).unwrap();
        let before: Vec<MixedStrategy> = w.agents().iter().map(|s| s.estimate((s.agent_id() + 1) % 4).unwrap().clone()).collect();
        for _ in 0..5 {
            let st = w.run_step().unwrap();
            assert_eq!((st.attempts, st.deliveries, st.acks), (0, 0, 0));
        }
        assert_eq!(w.streams().link.draws(), 0);
        assert_eq!(w.streams().ack.draws(), 0);
        let after: Vec<MixedStrategy> = w.agents().iter().map(|s| s.estimate((s.agent_id() + 1) % 4).unwrap().clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn forced_delivery_aligns_beliefs() {
        let mut cfg = SimConfig::preset(fixed(vec![vec![1.0, 2.0], vec![2.0, 1.0]]), Protocol::Dfp).unwrap();
        cfg.links = LinkSchedule::constant(LinkModel::uniform(2, 0.999_999_999_999, 1.0).unwrap());
        cfg.seed = 3;
        let mut w = World::new(&cfg, 0).unwrap();
        let st = w.run_step().unwrap();
        assert_eq!((st.deliveries, st.acks), (2, 2));
        let (a0, a1) = (&w.agents()[0], &w.agents()[1]);
        assert_eq!(a0.estimate(1).unwrap(), a1.own_freq());
        assert_eq!(a1.second_order(0).unwrap(), a1.own_freq());
        assert_eq!(a0.second_order(1).unwrap(), a0.own_freq());
        assert_eq!(a1.belief_similarity(0).unwrap(), 0.0);
    }

    #[test]
    fn step_draw_accounting() {
        let cfg = base(Protocol::Vl1);
        let mut w = World::new(&cfg, 0).unwrap();
        for _ in 0..30 {
            let before = w.streams().clone();
            let st = w.run_step().unwrap();
            let after = w.streams();
            assert_eq!(after.inertia.draws() - before.inertia.draws(), 4);
            assert!(after.tie_break.draws() - before.tie_break.draws() <= 4);
            assert_eq!(after.link.draws() - before.link.draws(), st.attempts);
            assert_eq!(after.ack.draws() - before.ack.draws(), st.deliveries);
        }
    }

    #[test]
    fn zero_horizon_is_a_no_op() {
        let mut cfg = base(Protocol::Vl1);
        cfg.t_final = 0;
        cfg.initial_profile = InitialProfile::Fixed(vec![ActionIndex(0), ActionIndex(0), ActionIndex(1), ActionIndex(2)]);
        let r = run_replication(&cfg, 0).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(r.final_profile, vec![ActionIndex(0), ActionIndex(0), ActionIndex(1), ActionIndex(2)]);
        assert_eq!(r.steps_run, 0);
    }

    #[test]
    fn trace_length_rounds_up() {
        let mut cfg = base(Protocol::Vl2);
        cfg.t_final = 10;
        cfg.record_every = 3;
        let r = run_replication(&cfg, 0).unwrap();
        assert_eq!(r.trace.iter().map(|t| t.step).collect::<Vec<_>>(), vec![3, 6, 9, 10]);
    }

    #[test]
    fn replication_is_deterministic() {
        let cfg = base(Protocol::Vl3);
        assert_eq!(run_replication(&cfg, 2).unwrap(), run_replication(&cfg, 2).unwrap());
        assert_ne!(run_replication(&cfg, 2).unwrap().trace, run_replication(&cfg, 3).unwrap().trace);
    }

    #[test]
    fn aggregate_of_one_is_identity() {
        let mut cfg = base(Protocol::Vl1);
        cfg.replications = 1;
        let exp = run_experiment(&cfg).unwrap();
        let rep = &exp.replications[0];
        assert_eq!(exp.aggregate.len(), rep.trace.len());
        for (a, t) in exp.aggregate.iter().zip(&rep.trace) {
            assert_eq!(a.step, t.step);
            assert_eq!(a.mean_dist_ne, t.mean_dist_ne);
            assert_eq!(a.mean_belief_err, t.mean_belief_err);
            assert_eq!(a.link_utilization, t.link_utilization);
            assert_eq!(a.coverage, t.coverage as f64);
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let mut cfg = base(Protocol::Vl1);
        cfg.replications = 6;
        let serial = run_experiment_with_jobs(&cfg, Some(1)).unwrap();
        let parallel = run_experiment_with_jobs(&cfg, Some(3)).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn dfp_utilization_is_one() {
        let mut cfg = base(Protocol::Dfp);
        cfg.replications = 3;
        let exp = run_experiment(&cfg).unwrap();
        assert!(exp.aggregate.iter().all(|r| r.link_utilization == 1.0));
    }

    #[test]
    fn early_stop_on_absorbed_equilibrium() {
        let mut cfg = SimConfig::preset(fixed(vec![vec![1.0, 2.0], vec![2.0, 1.0]]), Protocol::Vl1).unwrap();
        cfg.initial_profile = InitialProfile::Fixed(vec![ActionIndex(0), ActionIndex(1)]);
        cfg.initial_beliefs = InitialBeliefs::PointMass;
        cfg.early_stop_window = Some(20);
        let r = run_replication(&cfg, 0).unwrap();
        assert_eq!(r.steps_run, 20);
        assert_eq!(r.converged_at, Some(1));
        assert_eq!(r.trace.last().unwrap().step, 20);
    }

    #[test]
    fn config_validation() {
        let mut cfg = base(Protocol::Vl1);
        cfg.rho = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = base(Protocol::Vl1);
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = base(Protocol::Vl1);
        cfg.links = LinkSchedule::constant(LinkModel::uniform(3, 0.5, 0.5).unwrap());
        assert!(cfg.validate().is_err());
        let mut cfg = base(Protocol::Vl1);
        cfg.links = LinkSchedule::constant(LinkModel::uniform(4, 0.5, 0.0).unwrap());
        assert!(cfg.validate().is_err());
        let mut cfg = base(Protocol::Vl3);
        cfg.links = LinkSchedule::constant(LinkModel::uniform(4, 0.5, 0.0).unwrap());
        assert!(cfg.validate().is_ok());
    }
}
