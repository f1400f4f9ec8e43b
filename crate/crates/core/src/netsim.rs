//! Bernoulli communication links, acknowledgements and the seeded random
//! streams that drive every stochastic choice of a replication.
//!
//! Each replication owns one independent stream per [`Purpose`]. Stream seeds
//! are derived from the master seed with SplitMix64 so that turning a feature
//! on or off never shifts the draws seen by another feature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Result};

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    Scenario,
    InitialProfile,
    Inertia,
    TieBreak,
    Link,
    Ack,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Scenario => 0x5343_454e,
            Purpose::InitialProfile => 0x494e_4954,
            Purpose::Inertia => 0x494e_4552,
            Purpose::TieBreak => 0x5449_4542,
            Purpose::Link => 0x4c49_4e4b,
            Purpose::Ack => 0x4143_4b53,
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream `(replication, purpose)` under `master_seed`.
pub fn derive_stream_seed(master_seed: u64, replication: u64, purpose: Purpose) -> u64 {
    let rep_mixed = splitmix64(master_seed ^ splitmix64(replication));
    splitmix64(rep_mixed ^ purpose.tag())
}

/// A reproducible random stream with a draw counter.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, replication: u64, purpose: Purpose) -> Self {
        Self::from_seed(derive_stream_seed(master_seed, replication, purpose))
    }

    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
        }
    }

    /// Number of draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// One uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.random::<f64>()
    }

    /// One Bernoulli draw; always consumes exactly one uniform.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.draws += 1;
        self.rng.random_range(0..n)
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        self.draws += 1;
        &mut self.rng
    }
}

/// Dense `N x N` matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMatrix {
    n: usize,
    values: Vec<f64>,
}

impl PairMatrix {
    /// Same value on every off-diagonal entry.
    pub fn constant(n: usize, value: f64) -> Self {
        let mut values = vec![value; n * n];
        for i in 0..n {
            values[i * n + i] = 0.0;
        }
        Self { n, values }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid_input("pair matrix must be square"));
        }
        let mut values: Vec<f64> = rows.into_iter().flatten().collect();
        for i in 0..n {
            values[i * n + i] = 0.0;
        }
        Ok(Self { n, values })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n;
        self.values
            .iter()
            .enumerate()
            .filter(move |(idx, _)| idx / n != idx % n)
            .map(|(_, v)| *v)
    }
}

/// Link success and acknowledgement success probabilities for every ordered pair.
///
/// `p_comm[i][j]` is the probability that a message from `i` reaches `j`;
/// `beta_ack[j][i]` is the probability that `j`'s acknowledgement of a
/// delivered message reaches `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub p_comm: PairMatrix,
    pub beta_ack: PairMatrix,
}

impl LinkModel {
    pub fn new(p_comm: PairMatrix, beta_ack: PairMatrix) -> Result<Self> {
        if p_comm.size() != beta_ack.size() {
            return Err(invalid_config("p_comm and beta_ack sizes differ"));
        }
        if let Some(p) = p_comm.off_diagonal().find(|p| !(0.0..1.0).contains(p)) {
            return Err(invalid_config(format!("p_comm entry {p} outside [0, 1)")));
        }
        if let Some(b) = beta_ack.off_diagonal().find(|b| !(0.0..=1.0).contains(b)) {
            return Err(invalid_config(format!("beta_ack entry {b} outside [0, 1]")));
        }
        Ok(Self { p_comm, beta_ack })
    }

    /// Time-invariant scalar probabilities broadcast to all pairs.
    pub fn uniform(n: usize, p_comm: f64, beta_ack: f64) -> Result<Self> {
        Self::new(PairMatrix::constant(n, p_comm), PairMatrix::constant(n, beta_ack))
    }

    pub fn n_agents(&self) -> usize {
        self.p_comm.size()
    }

    /// Smallest off-diagonal link and ack probability.
    pub fn min_probabilities(&self) -> (f64, f64) {
        let p = self.p_comm.off_diagonal().fold(f64::INFINITY, f64::min);
        let b = self.beta_ack.off_diagonal().fold(f64::INFINITY, f64::min);
        (p, b)
    }
}

/// Link models indexed by step. A single entry is time invariant; otherwise
/// step `t` (1-based) uses entry `(t - 1) % len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSchedule {
    models: Vec<LinkModel>,
}

impl LinkSchedule {
    pub fn constant(model: LinkModel) -> Self {
        Self {
            models: vec![model],
        }
    }

    pub fn cyclic(models: Vec<LinkModel>) -> Result<Self> {
        let Some(first) = models.first() else {
            return Err(invalid_config("link schedule is empty"));
        };
        let n = first.n_agents();
        if models.iter().any(|m| m.n_agents() != n) {
            return Err(invalid_config("link schedule entries differ in size"));
        }
        Ok(Self { models })
    }

    pub fn at_step(&self, t: u64) -> &LinkModel {
        let idx = (t.saturating_sub(1) % self.models.len() as u64) as usize;
        &self.models[idx]
    }

    pub fn n_agents(&self) -> usize {
        self.models[0].n_agents()
    }

    pub fn models(&self) -> &[LinkModel] {
        &self.models
    }
}

/// Draws whether a message from `i` reaches `j`.
pub fn sample_link(model: &LinkModel, i: usize, j: usize, rng: &mut RngStream) -> Result<bool> {
    if i == j {
        return Err(invalid_input("link from an agent to itself"));
    }
    Ok(rng.bernoulli(model.p_comm.get(i, j)))
}

/// Draws whether receiver `j`'s acknowledgement reaches sender `i`.
///
/// Nothing is drawn when the message was not delivered.
pub fn sample_ack(
    model: &LinkModel,
    j: usize,
    i: usize,
    delivered: bool,
    rng: &mut RngStream,
) -> Result<bool> {
    if i == j {
        return Err(invalid_input("acknowledgement from an agent to itself"));
    }
    if !delivered {
        return Ok(false);
    }
    Ok(rng.bernoulli(model.beta_ack.get(j, i)))
}
