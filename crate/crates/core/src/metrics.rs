//! Per-step convergence metrics.

use serde::{Deserialize, Serialize};

use crate::beliefs::AgentState;
use crate::error::{invalid_input, Error, Result};
use crate::game::TargetAssignmentGame;
use crate::strategy::ActionIndex;

/// Metric snapshot of one replication at one recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    /// Mean distance of the own frequencies to the nearest pure equilibrium;
    /// NaN when the game is not a square target-assignment game.
    pub mean_dist_ne: f64,
    /// Mean distance between an agent's frequency and its peers' estimates of
    /// it; NaN with fewer than two agents.
    pub mean_belief_err: f64,
    /// Fraction of ordered pairs whose gate fired, averaged over the steps
    /// since the previous record.
    pub link_utilization: f64,
    /// Distinct actions in the current profile.
    pub coverage: usize,
}

/// Solves the square linear assignment problem exactly.
///
/// Returns `assignment[row] = column` and the minimal total cost. Runs the
/// shortest augmenting path method with row/column potentials in `O(n^3)`.
pub fn assignment_min_cost(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if cost.iter().any(|row| row.len() != n) {
        return Err(invalid_input("assignment cost matrix must be square"));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(invalid_input("assignment cost matrix has non-finite entries"));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }

    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for col in 1..=n {
        assignment[owner[col] - 1] = col - 1;
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r][c])
        .sum();
    Ok((assignment, total))
}

/// Mean distance from each agent's own frequency to its action in the
/// nearest pure equilibrium, where equilibria are the bijections from agents
/// to targets.
pub fn dist_to_nearest_pure_ne(states: &[AgentState], game: &TargetAssignmentGame) -> Result<f64> {
    let n = states.len();
    if n != game.n_agents() || game.n_agents() != game.n_targets() {
        return Err(Error::UnsupportedMetric(format!(
            "nearest equilibrium distance needs as many agents as targets ({} vs {})",
            game.n_agents(),
            game.n_targets()
        )));
    }
    let cost: Vec<Vec<f64>> = states
        .iter()
        .map(|s| {
            (0..n)
                .map(|k| s.own_freq().distance_to_action(ActionIndex(k)))
                .collect()
        })
        .collect();
    let (_, total) = assignment_min_cost(&cost)?;
    Ok(total / n as f64)
}

/// Mean over ordered pairs `(i, j != i)` of `||f_i - f^j_i||`.
pub fn belief_disagreement(states: &[AgentState]) -> Result<f64> {
    let n = states.len();
    if n < 2 {
        return Err(Error::UnsupportedMetric(
            "belief disagreement needs at least two agents".into(),
        ));
    }
    let mut total = 0.0;
    for (i, si) in states.iter().enumerate() {
        for (j, sj) in states.iter().enumerate() {
            if i != j {
                total += si.own_freq().distance(sj.estimate(i)?);
            }
        }
    }
    Ok(total / (n * (n - 1)) as f64)
}

/// Number of distinct actions in a profile.
pub fn coverage_count(profile: &[ActionIndex]) -> usize {
    let mut seen: Vec<usize> = profile.iter().map(|a| a.0).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::MixedStrategy;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.len() {
                *best = best.min(acc);
                return;
            }
            for c in 0..cost.len() {
                if !used[c] {
                    used[c] = true;
                    rec(cost, row + 1, used, acc + cost[row][c], best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
        best
    }

    #[test]
    fn identity_favoring() {
        let (perm, cost) = assignment_min_cost(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(perm, vec![0, 1]);
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn anti_diagonal() {
        let m = vec![vec![4.0, 1.0], vec![2.0, 3.0]];
        assert_eq!(brute_force(&m), 3.0);
        let (perm, cost) = assignment_min_cost(&m).unwrap();
        assert_eq!(perm, vec![1, 0]);
        assert_eq!(cost, 3.0);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(assignment_min_cost(&[vec![1.0, 2.0]]).is_err());
        assert!(assignment_min_cost(&[vec![f64::NAN]]).is_err());
        assert_eq!(assignment_min_cost(&[]).unwrap().1, 0.0);
    }

    #[test]
    fn handles_negative_costs() {
        let m = vec![
            vec![-3.0, 2.0, 0.5],
            vec![1.0, -1.0, 4.0],
            vec![0.0, 0.0, -2.5],
        ];
        let (_, cost) = assignment_min_cost(&m).unwrap();
        assert_eq!(cost, brute_force(&m));
    }

    fn uniform_states(n: usize, k: usize) -> Vec<AgentState> {
        (0..n).map(|i| AgentState::new(i, n, k, ActionIndex(0))).collect()
    }

    fn game(n: usize) -> TargetAssignmentGame {
        TargetAssignmentGame::from_distances(vec![vec![1.0; n]; n]).unwrap()
    }

    #[test]
    fn dist_ne_examples() {
        let profile: Vec<ActionIndex> = (0..3).map(ActionIndex).collect();
        let exact: Vec<AgentState> = (0..3)
            .map(|i| AgentState::with_point_masses(i, &profile, 3))
            .collect();
        assert_eq!(dist_to_nearest_pure_ne(&exact, &game(3)).unwrap(), 0.0);

        let d = dist_to_nearest_pure_ne(&uniform_states(2, 2), &game(2)).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);

        let same = [ActionIndex(0), ActionIndex(0)];
        let both_zero: Vec<AgentState> = (0..2)
            .map(|i| AgentState::with_point_masses(i, &same, 2))
            .collect();
        let d = dist_to_nearest_pure_ne(&both_zero, &game(2)).unwrap();
        assert!((d - 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn dist_ne_needs_square_game() {
        let g = TargetAssignmentGame::from_distances(vec![vec![1.0; 3]; 2]).unwrap();
        assert!(matches!(
            dist_to_nearest_pure_ne(&uniform_states(2, 3), &g),
            Err(Error::UnsupportedMetric(_))
        ));
    }

    #[test]
    fn belief_disagreement_examples() {
        let profile = [ActionIndex(0), ActionIndex(1)];
        let exact: Vec<AgentState> = (0..2)
            .map(|i| AgentState::with_point_masses(i, &profile, 2))
            .collect();
        assert_eq!(belief_disagreement(&exact).unwrap(), 0.0);

        // each agent plays a pure action while its peer still holds the uniform estimate
        let u = MixedStrategy::uniform(2);
        let states: Vec<AgentState> = (0..2)
            .map(|i| {
                AgentState::from_parts(
                    i,
                    ActionIndex(i),
                    MixedStrategy::point_mass(ActionIndex(i), 2),
                    vec![u.clone(); 2],
                    vec![u.clone(); 2],
                )
                .unwrap()
            })
            .collect();
        let d = belief_disagreement(&states).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);

        assert!(belief_disagreement(&uniform_states(1, 2)).is_err());
    }

    #[test]
    fn coverage_examples() {
        let a = |ks: &[usize]| ks.iter().map(|&k| ActionIndex(k)).collect::<Vec<_>>();
        assert_eq!(coverage_count(&a(&[2, 0, 1, 3])), 4);
        assert_eq!(coverage_count(&a(&[0, 0, 0])), 1);
        assert_eq!(coverage_count(&a(&[0, 0, 1, 2])), 3);
    }
}
