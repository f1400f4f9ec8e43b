//! Games played by the agents: the target-assignment game used in the
//! experiments and explicit utility tables for small oracle instances.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Error, Result};
use crate::netsim::RngStream;
use crate::strategy::{ActionIndex, MixedStrategy};

/// Smallest distance allowed between an agent and a target.
pub const DISTANCE_FLOOR: f64 = 1e-6;

/// Largest number of joint profiles enumerated when computing an expected
/// utility of a [`MatrixGame`].
pub const EXPECTATION_ENUMERATION_CAP: u128 = 10_000_000;

/// Target radii are drawn uniformly from this range.
pub const TARGET_RADIUS_RANGE: (f64, f64) = (15.0, 20.0);

/// `base^exp` as `u128`, saturating.
pub fn checked_pow(base: usize, exp: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base as u128);
    }
    acc
}

/// Encodes a profile as a base-`K` number with agent 0 as the most significant digit.
pub fn profile_index(profile: &[ActionIndex], n_actions: usize) -> usize {
    profile
        .iter()
        .fold(0usize, |acc, a| acc * n_actions + a.0)
}

/// Inverse of [`profile_index`].
pub fn decode_profile(mut index: usize, n_agents: usize, n_actions: usize) -> Vec<ActionIndex> {
    let mut out = vec![ActionIndex(0); n_agents];
    for slot in out.iter_mut().rev() {
        *slot = ActionIndex(index % n_actions);
        index /= n_actions;
    }
    out
}

/// Relative tolerance under which two utilities count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Indices of the maximal entries of `values`, treating values within
/// [`TIE_TOLERANCE`] (relative) of the maximum as tied.
pub fn argmax_set(values: &[f64]) -> Vec<ActionIndex> {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_TOLERANCE * best.abs();
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| best - **v <= slack)
        .map(|(k, _)| ActionIndex(k))
        .collect()
}

/// `N` agents choose among `K` targets; an agent alone on target `k` earns
/// the inverse of its distance to `k`, agents that share a target earn nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAssignmentGame {
    n_agents: usize,
    n_targets: usize,
    /// Row-major `N x K`.
    distances: Vec<f64>,
    agent_positions: Option<Vec<[f64; 2]>>,
    target_positions: Option<Vec<[f64; 2]>>,
}

impl TargetAssignmentGame {
    /// Builds a game from an explicit distance matrix (one row per agent).
    /// Entries below [`DISTANCE_FLOOR`] are raised to it.
    pub fn from_distances(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_agents = rows.len();
        if n_agents == 0 {
            return Err(invalid_input("target game needs at least one agent"));
        }
        let n_targets = rows[0].len();
        if n_targets == 0 {
            return Err(invalid_input("target game needs at least one target"));
        }
        if rows.iter().any(|r| r.len() != n_targets) {
            return Err(invalid_input("distance rows differ in length"));
        }
        let mut distances = Vec::with_capacity(n_agents * n_targets);
        for d in rows.into_iter().flatten() {
            if !d.is_finite() || d < 0.0 {
                return Err(invalid_input(format!("distance {d} is not finite and non-negative")));
            }
            distances.push(d.max(DISTANCE_FLOOR));
        }
        Ok(Self {
            n_agents,
            n_targets,
            distances,
            agent_positions: None,
            target_positions: None,
        })
    }

    /// Builds a game from planar positions using Euclidean distances.
    pub fn from_positions(agents: Vec<[f64; 2]>, targets: Vec<[f64; 2]>) -> Result<Self> {
        let rows = agents
            .iter()
            .map(|a| {
                targets
                    .iter()
                    .map(|t| ((a[0] - t[0]).powi(2) + (a[1] - t[1]).powi(2)).sqrt())
                    .collect()
            })
            .collect();
        let mut game = Self::from_distances(rows)?;
        game.agent_positions = Some(agents);
        game.target_positions = Some(targets);
        Ok(game)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    #[inline]
    pub fn distance(&self, i: usize, k: usize) -> f64 {
        self.distances[i * self.n_targets + k]
    }

    pub fn distance_row(&self, i: usize) -> &[f64] {
        &self.distances[i * self.n_targets..(i + 1) * self.n_targets]
    }

    pub fn agent_positions(&self) -> Option<&[[f64; 2]]> {
        self.agent_positions.as_deref()
    }

    pub fn target_positions(&self) -> Option<&[[f64; 2]]> {
        self.target_positions.as_deref()
    }

    fn utility(&self, i: usize, profile: &[ActionIndex]) -> f64 {
        let k = profile[i];
        let shared = profile
            .iter()
            .enumerate()
            .any(|(j, a)| j != i && *a == k);
        if shared {
            0.0
        } else {
            1.0 / self.distance(i, k.0)
        }
    }

    /// Expected utility of every target for agent `i`: the probability that
    /// no other agent picks `k`, divided by the distance to `k`.
    fn expected_utilities<'a>(
        &self,
        i: usize,
        others: impl Iterator<Item = &'a MixedStrategy>,
    ) -> Vec<f64> {
        let mut free = vec![1.0; self.n_targets];
        for f in others {
            for (acc, p) in free.iter_mut().zip(f.probs()) {
                *acc *= 1.0 - p;
            }
        }
        free.iter()
            .zip(self.distance_row(i))
            .map(|(p, d)| p / d)
            .collect()
    }
}

/// An explicit utility table over all `K^N` pure profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    n_agents: usize,
    n_actions: usize,
    /// `utilities[agent * K^N + profile_index]`.
    utilities: Vec<f64>,
}

/// Largest table a [`MatrixGame`] may hold.
pub const MATRIX_GAME_CAP: u128 = 10_000_000;

impl MatrixGame {
    /// `table(agent, profile)` is evaluated once for every agent and profile.
    pub fn from_fn(
        n_agents: usize,
        n_actions: usize,
        mut table: impl FnMut(usize, &[ActionIndex]) -> f64,
    ) -> Result<Self> {
        if n_agents == 0 || n_actions == 0 {
            return Err(invalid_input("matrix game needs at least one agent and one action"));
        }
        let profiles = checked_pow(n_actions, n_agents);
        let required = profiles.saturating_mul(n_agents as u128);
        if required > MATRIX_GAME_CAP {
            return Err(Error::Capacity {
                what: "matrix game table",
                required,
                cap: MATRIX_GAME_CAP,
            });
        }
        let profiles = profiles as usize;
        let mut utilities = vec![0.0; n_agents * profiles];
        for idx in 0..profiles {
            let profile = decode_profile(idx, n_agents, n_actions);
            for i in 0..n_agents {
                utilities[i * profiles + idx] = table(i, &profile);
            }
        }
        Ok(Self {
            n_agents,
            n_actions,
            utilities,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn n_profiles(&self) -> usize {
        self.utilities.len() / self.n_agents
    }

    fn utility(&self, i: usize, profile: &[ActionIndex]) -> f64 {
        self.utilities[i * self.n_profiles() + profile_index(profile, self.n_actions)]
    }

    fn expected_utilities(&self, i: usize, others: &[&MixedStrategy]) -> Result<Vec<f64>> {
        let k = self.n_actions;
        let joint = checked_pow(k, self.n_agents - 1);
        if joint > EXPECTATION_ENUMERATION_CAP {
            return Err(Error::Capacity {
                what: "expected utility enumeration",
                required: joint,
                cap: EXPECTATION_ENUMERATION_CAP,
            });
        }
        let mut out = vec![0.0; k];
        let mut profile = vec![ActionIndex(0); self.n_agents];
        for idx in 0..joint as usize {
            let rest = decode_profile(idx, self.n_agents - 1, k);
            let mut weight = 1.0;
            for (slot, (a, f)) in rest.iter().zip(others).enumerate() {
                let j = if slot < i { slot } else { slot + 1 };
                profile[j] = *a;
                weight *= f.prob(*a);
            }
            if weight == 0.0 {
                continue;
            }
            for (action, acc) in out.iter_mut().enumerate() {
                profile[i] = ActionIndex(action);
                *acc += weight * self.utility(i, &profile);
            }
        }
        Ok(out)
    }

    /// Parses the TOML utility-table format.
    ///
    /// ```toml
    /// n_agents = 2
    /// n_actions = 2
    ///
    /// [[utility]]
    /// agent = 0
    /// profile = "01"   # base-K digits, agent 0 first
    /// value = 1.0
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: MatrixGameFile =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_game()
    }

    pub fn to_toml_string(&self) -> String {
        let profiles = self.n_profiles();
        let mut entries = Vec::with_capacity(self.utilities.len());
        for i in 0..self.n_agents {
            for idx in 0..profiles {
                let profile = decode_profile(idx, self.n_agents, self.n_actions);
                entries.push(UtilityEntry {
                    agent: i,
                    profile: encode_digits(&profile, self.n_actions),
                    value: self.utilities[i * profiles + idx],
                });
            }
        }
        let file = MatrixGameFile {
            n_agents: self.n_agents,
            n_actions: self.n_actions,
            utility: entries,
        };
        toml::to_string(&file).expect("matrix game serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixGameFile {
    n_agents: usize,
    n_actions: usize,
    #[serde(default)]
    utility: Vec<UtilityEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtilityEntry {
    agent: usize,
    profile: String,
    value: f64,
}

fn encode_digits(profile: &[ActionIndex], n_actions: usize) -> String {
    profile
        .iter()
        .map(|a| std::char::from_digit(a.0 as u32, n_actions as u32).expect("digit in radix"))
        .collect()
}

fn parse_digits(s: &str, n_agents: usize, n_actions: usize) -> Result<Vec<ActionIndex>> {
    if s.chars().count() != n_agents {
        return Err(Error::Parse(format!(
            "profile {s:?} has {} digits, expected {n_agents}",
            s.chars().count()
        )));
    }
    s.chars()
        .map(|c| {
            c.to_digit(n_actions as u32)
                .map(|d| ActionIndex(d as usize))
                .ok_or_else(|| Error::Parse(format!("{c:?} is not a base-{n_actions} digit")))
        })
        .collect()
}

impl MatrixGameFile {
    fn into_game(self) -> Result<MatrixGame> {
        let (n, k) = (self.n_agents, self.n_actions);
        if !(2..=36).contains(&k) && k != 1 {
            return Err(Error::Parse(format!("n_actions {k} must be in 1..=36")));
        }
        let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for entry in self.utility {
            if entry.agent >= n {
                return Err(Error::Parse(format!("agent {} out of range", entry.agent)));
            }
            if !entry.value.is_finite() {
                return Err(Error::Parse(format!("utility {} is not finite", entry.value)));
            }
            let profile = parse_digits(&entry.profile, n, k)?;
            let key = (entry.agent, profile_index(&profile, k));
            if table.insert(key, entry.value).is_some() {
                return Err(Error::Parse(format!(
                    "duplicate utility for agent {} profile {}",
                    entry.agent, entry.profile
                )));
            }
        }
        let expected = checked_pow(k, n).saturating_mul(n as u128);
        if table.len() as u128 != expected {
            return Err(Error::Parse(format!(
                "utility table has {} entries, expected {expected}",
                table.len()
            )));
        }
        MatrixGame::from_fn(n, k, |i, profile| table[&(i, profile_index(profile, k))])
    }
}

/// Any game the simulator can run.
#[derive(Debug, Clone, PartialEq)]
pub enum GameSpec {
    TargetAssignment(TargetAssignmentGame),
    Matrix(MatrixGame),
}

impl From<TargetAssignmentGame> for GameSpec {
    fn from(g: TargetAssignmentGame) -> Self {
        GameSpec::TargetAssignment(g)
    }
}

impl From<MatrixGame> for GameSpec {
    fn from(g: MatrixGame) -> Self {
        GameSpec::Matrix(g)
    }
}

impl GameSpec {
    pub fn n_agents(&self) -> usize {
        match self {
            GameSpec::TargetAssignment(g) => g.n_agents(),
            GameSpec::Matrix(g) => g.n_agents(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            GameSpec::TargetAssignment(g) => g.n_targets(),
            GameSpec::Matrix(g) => g.n_actions(),
        }
    }

    pub fn as_target_assignment(&self) -> Option<&TargetAssignmentGame> {
        match self {
            GameSpec::TargetAssignment(g) => Some(g),
            GameSpec::Matrix(_) => None,
        }
    }

    fn check_profile(&self, profile: &[ActionIndex]) -> Result<()> {
        if profile.len() != self.n_agents() {
            return Err(invalid_input(format!(
                "profile has {} entries, game has {} agents",
                profile.len(),
                self.n_agents()
            )));
        }
        if let Some(a) = profile.iter().find(|a| a.0 >= self.n_actions()) {
            return Err(invalid_input(format!("action {a} out of range")));
        }
        Ok(())
    }

    /// Utility of agent `i` at a pure profile.
    pub fn utility(&self, i: usize, profile: &[ActionIndex]) -> Result<f64> {
        if i >= self.n_agents() {
            return Err(invalid_input(format!("agent {i} out of range")));
        }
        self.check_profile(profile)?;
        Ok(self.utility_unchecked(i, profile))
    }

    #[inline]
    pub(crate) fn utility_unchecked(&self, i: usize, profile: &[ActionIndex]) -> f64 {
        match self {
            GameSpec::TargetAssignment(g) => g.utility(i, profile),
            GameSpec::Matrix(g) => g.utility(i, profile),
        }
    }

    /// Expected utility of agent `i` taking action `k` when every other agent
    /// plays independently according to `estimates` (ordered by agent id,
    /// skipping `i`).
    pub fn expected_utility(
        &self,
        i: usize,
        k: ActionIndex,
        estimates: &[MixedStrategy],
    ) -> Result<f64> {
        if k.0 >= self.n_actions() {
            return Err(invalid_input(format!("action {k} out of range")));
        }
        let refs: Vec<&MixedStrategy> = estimates.iter().collect();
        Ok(self.expected_utilities(i, &refs)?[k.0])
    }

    /// Expected utility of every action of agent `i`; see [`Self::expected_utility`].
    pub fn expected_utilities(&self, i: usize, estimates: &[&MixedStrategy]) -> Result<Vec<f64>> {
        if i >= self.n_agents() {
            return Err(invalid_input(format!("agent {i} out of range")));
        }
        if estimates.len() + 1 != self.n_agents() {
            return Err(invalid_input(format!(
                "expected {} estimates, got {}",
                self.n_agents() - 1,
                estimates.len()
            )));
        }
        if estimates.iter().any(|f| f.len() != self.n_actions()) {
            return Err(invalid_input("estimate length differs from action count"));
        }
        match self {
            GameSpec::TargetAssignment(g) => Ok(g.expected_utilities(i, estimates.iter().copied())),
            GameSpec::Matrix(g) => g.expected_utilities(i, estimates),
        }
    }
}

/// Samples a target-assignment scenario: targets on an annulus of radii
/// 15..20 around the origin, agents scattered with standard normal coordinates.
pub fn generate_scenario(
    n_agents: usize,
    n_targets: usize,
    rng: &mut RngStream,
) -> Result<TargetAssignmentGame> {
    if n_agents == 0 || n_targets == 0 {
        return Err(invalid_input("scenario needs at least one agent and one target"));
    }
    let radius = Uniform::new_inclusive(TARGET_RADIUS_RANGE.0, TARGET_RADIUS_RANGE.1)
        .expect("valid radius range");
    let angle = Uniform::new(0.0, TAU).expect("valid angle range");
    let targets: Vec<[f64; 2]> = (0..n_targets)
        .map(|_| {
            let r = radius.sample(rng.rng_mut());
            let theta = angle.sample(rng.rng_mut());
            [r * theta.cos(), r * theta.sin()]
        })
        .collect();
    let agents: Vec<[f64; 2]> = (0..n_agents)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng.rng_mut());
            let y: f64 = StandardNormal.sample(rng.rng_mut());
            [x, y]
        })
        .collect();
    TargetAssignmentGame::from_positions(agents, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::Purpose;

    fn a(ks: &[usize]) -> Vec<ActionIndex> {
        ks.iter().map(|&k| ActionIndex(k)).collect()
    }

    fn two_agent_game() -> GameSpec {
        TargetAssignmentGame::from_distances(vec![vec![2.0, 3.0], vec![5.0, 4.0]])
            .unwrap()
            .into()
    }

    #[test]
    fn lone_selector_earns_inverse_distance() {
        let g = two_agent_game();
        assert_eq!(g.utility(0, &a(&[0, 1])).unwrap(), 0.5);
        assert_eq!(g.utility(1, &a(&[0, 1])).unwrap(), 0.25);
    }

    #[test]
    fn shared_target_earns_nothing() {
        let g = two_agent_game();
        assert_eq!(g.utility(0, &a(&[0, 0])).unwrap(), 0.0);
        assert_eq!(g.utility(1, &a(&[0, 0])).unwrap(), 0.0);
    }

    #[test]
    fn utility_rejects_bad_indices() {
        let g = two_agent_game();
        assert!(g.utility(2, &a(&[0, 1])).is_err());
        assert!(g.utility(0, &a(&[0, 2])).is_err());
        assert!(g.utility(0, &a(&[0])).is_err());
    }

    #[test]
    fn expected_utility_closed_form_edges() {
        let g: GameSpec = TargetAssignmentGame::from_distances(vec![
            vec![4.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ])
        .unwrap()
        .into();
        let off = MixedStrategy::new(vec![0.0, 0.5, 0.5]).unwrap();
        let on = MixedStrategy::point_mass(ActionIndex(0), 3);
        let v = g
            .expected_utility(0, ActionIndex(0), &[off.clone(), off.clone()])
            .unwrap();
        assert_eq!(v, 0.25);
        let v = g.expected_utility(0, ActionIndex(0), &[off, on]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn expected_utility_rejects_wrong_count() {
        let g = two_agent_game();
        let u = MixedStrategy::uniform(2);
        assert!(g
            .expected_utility(0, ActionIndex(0), &[u.clone(), u])
            .is_err());
    }

    #[test]
    fn scenario_respects_geometry() {
        let mut rng = RngStream::new(3, 0, Purpose::Scenario);
        let g = generate_scenario(20, 20, &mut rng).unwrap();
        for t in g.target_positions().unwrap() {
            let r = (t[0] * t[0] + t[1] * t[1]).sqrt();
            assert!((15.0 - 1e-9..=20.0 + 1e-9).contains(&r), "radius {r}");
        }
        assert!(g.distances.iter().all(|d| *d >= DISTANCE_FLOOR));
    }

    #[test]
    fn scenario_is_deterministic() {
        let g1 = generate_scenario(6, 4, &mut RngStream::new(11, 2, Purpose::Scenario)).unwrap();
        let g2 = generate_scenario(6, 4, &mut RngStream::new(11, 2, Purpose::Scenario)).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn degenerate_scenario() {
        let g = generate_scenario(1, 1, &mut RngStream::new(0, 0, Purpose::Scenario)).unwrap();
        assert_eq!(g.n_agents(), 1);
        assert!(g.distance(0, 0) > 0.0);
        assert!(generate_scenario(0, 1, &mut RngStream::new(0, 0, Purpose::Scenario)).is_err());
    }

    #[test]
    fn distance_floor_applies() {
        let g = TargetAssignmentGame::from_distances(vec![vec![0.0]]).unwrap();
        assert_eq!(g.distance(0, 0), DISTANCE_FLOOR);
    }

    #[test]
    fn profile_codec_is_msd_first() {
        assert_eq!(profile_index(&a(&[1, 0, 2]), 3), 9 + 2);
        assert_eq!(decode_profile(11, 3, 3), a(&[1, 0, 2]));
    }

    #[test]
    fn matrix_file_roundtrip() {
        let g = MatrixGame::from_fn(2, 3, |i, p| (i * 10 + p[0].0 * 3 + p[1].0) as f64).unwrap();
        let text = g.to_toml_string();
        assert_eq!(MatrixGame::from_toml_str(&text).unwrap(), g);
    }

    #[test]
    fn matrix_file_rejects_missing_entries() {
        let text = "n_agents = 1\nn_actions = 2\n[[utility]]\nagent = 0\nprofile = \"0\"\nvalue = 1.0\n";
        assert!(matches!(MatrixGame::from_toml_str(text), Err(Error::Parse(_))));
    }

    #[test]
    fn matrix_file_rejects_bad_digits() {
        let text = "n_agents = 1\nn_actions = 2\n[[utility]]\nagent = 0\nprofile = \"2\"\nvalue = 1.0\n";
        assert!(MatrixGame::from_toml_str(text).is_err());
    }

    #[test]
    fn matrix_table_capacity() {
        assert!(matches!(
            MatrixGame::from_fn(8, 8, |_, _| 0.0),
            Err(Error::Capacity { .. })
        ));
    }
}
