//! Actions and mixed strategies over a common finite action set.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};

/// Tolerance on the simplex sum constraint.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Index of an action in the shared action set `{0, .., K-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionIndex(pub usize);

impl ActionIndex {
    pub fn new(k: usize, n_actions: usize) -> Result<Self> {
        if k >= n_actions {
            return Err(invalid_input(format!(
                "action {k} out of range for {n_actions} actions"
            )));
        }
        Ok(Self(k))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for ActionIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A probability vector over `K` actions.
///
/// Used for empirical frequencies, first- and second-order estimates, and
/// reconstructions of limited payloads. Construction validates the simplex
/// constraints; the update methods in [`crate::beliefs`] preserve them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixedStrategy {
    probs: Vec<f64>,
}

impl MixedStrategy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid_input("mixed strategy needs at least one action"));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(invalid_input(format!("probability {p} is not a finite non-negative value")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(invalid_input(format!("probabilities sum to {sum}, expected 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_actions: usize) -> Self {
        assert!(n_actions > 0, "uniform strategy over zero actions");
        Self {
            probs: vec![1.0 / n_actions as f64; n_actions],
        }
    }

    /// Point mass on action `k` (the unit vector `e_k`).
    pub fn point_mass(k: ActionIndex, n_actions: usize) -> Self {
        assert!(k.0 < n_actions, "action {} out of range", k.0);
        let mut probs = vec![0.0; n_actions];
        probs[k.0] = 1.0;
        Self { probs }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, k: ActionIndex) -> f64 {
        self.probs[k.0]
    }

    /// Euclidean distance to another strategy of the same length.
    pub fn distance(&self, other: &MixedStrategy) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean distance to the unit vector `e_k`.
    pub fn distance_to_action(&self, k: ActionIndex) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(idx, &p)| {
                let d = if idx == k.0 { 1.0 - p } else { p };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entry and its index; ties go to the smallest index.
    pub fn max_entry(&self) -> (f64, ActionIndex) {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = k;
            }
        }
        (self.probs[best], ActionIndex(best))
    }

    /// In-place convex step toward `e_k`: `self <- (1 - rate) * self + rate * e_k`.
    pub(crate) fn step_toward(&mut self, k: ActionIndex, rate: f64) {
        for p in &mut self.probs {
            *p *= 1.0 - rate;
        }
        self.probs[k.0] += rate;
    }

    pub(crate) fn from_raw_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(Self::new(probs.clone()).is_ok());
        Self { probs }
    }

    /// True when every entry is non-negative and the sum is within `tol` of 1.
    pub fn is_on_simplex(&self, tol: f64) -> bool {
        self.probs.iter().all(|p| *p >= 0.0 && p.is_finite())
            && (self.probs.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

impl TryFrom<Vec<f64>> for MixedStrategy {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MixedStrategy> for Vec<f64> {
    fn from(s: MixedStrategy) -> Self {
        s.probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_off_simplex() {
        assert!(MixedStrategy::new(vec![0.5, 0.6]).is_err());
        assert!(MixedStrategy::new(vec![-0.1, 1.1]).is_err());
        assert!(MixedStrategy::new(vec![]).is_err());
        assert!(MixedStrategy::new(vec![f64::NAN, 1.0]).is_err());
        assert!(MixedStrategy::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn action_index_bounds() {
        assert!(ActionIndex::new(3, 3).is_err());
        assert_eq!(ActionIndex::new(2, 3).unwrap().get(), 2);
    }

    #[test]
    fn distance_to_action_matches_point_mass_distance() {
        let f = MixedStrategy::new(vec![0.2, 0.5, 0.3]).unwrap();
        let e1 = MixedStrategy::point_mass(ActionIndex(1), 3);
        assert!((f.distance(&e1) - f.distance_to_action(ActionIndex(1))).abs() < 1e-15);
    }

    #[test]
    fn max_entry_prefers_smallest_index() {
        let f = MixedStrategy::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(f.max_entry(), (0.4, ActionIndex(0)));
    }
}
