//! Brute-force ground truth on small games: pure equilibria, best-response
//! sets, weak acyclicity and strict best responses at equilibria.

use std::collections::VecDeque;

use crate::error::{invalid_input, Error, Result};
use crate::game::{argmax_set, checked_pow, decode_profile, profile_index, GameSpec};
use crate::strategy::ActionIndex;

/// Profile cap for equilibrium enumeration.
pub const NE_ENUMERATION_CAP: u128 = 1_000_000;
/// Profile cap for the best-response graph search.
pub const ACYCLICITY_CAP: u128 = 100_000;

fn profile_count(game: &GameSpec, cap: u128, what: &'static str) -> Result<usize> {
    let count = checked_pow(game.n_actions(), game.n_agents());
    if count > cap {
        return Err(Error::Capacity {
            what,
            required: count,
            cap,
        });
    }
    Ok(count as usize)
}

fn deviation_utilities(game: &GameSpec, i: usize, profile: &[ActionIndex]) -> Vec<f64> {
    let mut probe = profile.to_vec();
    (0..game.n_actions())
        .map(|k| {
            probe[i] = ActionIndex(k);
            game.utility_unchecked(i, &probe)
        })
        .collect()
}

/// All actions of agent `i` that maximize its utility against the other
/// agents' actions in `profile`.
pub fn best_response_exact(game: &GameSpec, i: usize, profile: &[ActionIndex]) -> Result<Vec<ActionIndex>> {
    game.utility(i, profile)?;
    Ok(argmax_set(&deviation_utilities(game, i, profile)))
}

/// Whether no agent can gain by a unilateral deviation.
pub fn is_pure_ne(game: &GameSpec, profile: &[ActionIndex]) -> bool {
    (0..game.n_agents()).all(|i| argmax_set(&deviation_utilities(game, i, profile)).contains(&profile[i]))
}

/// Every pure Nash equilibrium, in increasing profile-index order.
pub fn enumerate_pure_ne(game: &GameSpec) -> Result<Vec<Vec<ActionIndex>>> {
    let total = profile_count(game, NE_ENUMERATION_CAP, "pure equilibrium enumeration")?;
    let (n, k) = (game.n_agents(), game.n_actions());
    Ok((0..total)
        .map(|idx| decode_profile(idx, n, k))
        .filter(|p| is_pure_ne(game, p))
        .collect())
}

/// True when every agent has a unique best response at every pure equilibrium.
pub fn check_assumption_1(game: &GameSpec) -> Result<bool> {
    Ok(assumption_1_violations(game)?.is_empty())
}

/// `(equilibrium, agent)` pairs where the agent's best response is not unique.
pub fn assumption_1_violations(game: &GameSpec) -> Result<Vec<(Vec<ActionIndex>, usize)>> {
    let mut out = Vec::new();
    for ne in enumerate_pure_ne(game)? {
        for i in 0..game.n_agents() {
            if argmax_set(&deviation_utilities(game, i, &ne)).len() > 1 {
                out.push((ne.clone(), i));
            }
        }
    }
    Ok(out)
}

/// Result of a weak-acyclicity check.
#[derive(Debug, Clone, PartialEq)]
pub struct AcyclicityReport {
    pub weakly_acyclic: bool,
    /// For each start profile (by profile index), a best-response path
    /// ending at a pure equilibrium, or `None` when no such path exists.
    /// The path includes the start; an equilibrium's path is just itself.
    pub witnesses: Vec<Option<Vec<Vec<ActionIndex>>>>,
}

/// Profiles reachable from `profile` by letting one agent that is not
/// best-responding switch to one of its best responses.
fn improvement_successors(game: &GameSpec, profile: &[ActionIndex]) -> Vec<usize> {
    let k = game.n_actions();
    let mut out = Vec::new();
    let mut next = profile.to_vec();
    for i in 0..game.n_agents() {
        let best = argmax_set(&deviation_utilities(game, i, profile));
        if best.contains(&profile[i]) {
            continue;
        }
        for b in best {
            next[i] = b;
            out.push(profile_index(&next, k));
        }
        next[i] = profile[i];
    }
    out
}

/// Searches the best-response graph backwards from the pure equilibria.
pub fn check_weak_acyclicity(game: &GameSpec) -> Result<AcyclicityReport> {
    let total = profile_count(game, ACYCLICITY_CAP, "best-response graph search")?;
    let (n, k) = (game.n_agents(), game.n_actions());

    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); total];
    let mut is_ne = vec![false; total];
    for (idx, ne) in is_ne.iter_mut().enumerate() {
        let profile = decode_profile(idx, n, k);
        let succ = improvement_successors(game, &profile);
        *ne = succ.is_empty();
        for s in succ {
            predecessors[s].push(idx);
        }
    }

    // next_hop[p] = successor of p on a shortest path to an equilibrium
    let mut next_hop: Vec<Option<usize>> = vec![None; total];
    let mut reached = is_ne.clone();
    let mut queue: VecDeque<usize> = (0..total).filter(|&p| is_ne[p]).collect();
    while let Some(p) = queue.pop_front() {
        for &q in &predecessors[p] {
            if !reached[q] {
                reached[q] = true;
                next_hop[q] = Some(p);
                queue.push_back(q);
            }
        }
    }

    let witnesses = (0..total)
        .map(|start| {
            if !reached[start] {
                return None;
            }
            let mut path = vec![decode_profile(start, n, k)];
            let mut at = start;
            while let Some(nx) = next_hop[at] {
                path.push(decode_profile(nx, n, k));
                at = nx;
            }
            Some(path)
        })
        .collect();

    Ok(AcyclicityReport {
        weakly_acyclic: reached.iter().all(|r| *r),
        witnesses,
    })
}

/// Checks that consecutive profiles of `path` differ in exactly one agent who
/// moves to a best response it was not already playing, and that the path
/// ends at a pure equilibrium.
pub fn validate_witness(game: &GameSpec, path: &[Vec<ActionIndex>]) -> Result<()> {
    let last = path.last().ok_or_else(|| invalid_input("empty witness path"))?;
    if !is_pure_ne(game, last) {
        return Err(invalid_input("witness path does not end at an equilibrium"));
    }
    for w in path.windows(2) {
        let moved: Vec<usize> = (0..game.n_agents()).filter(|&i| w[0][i] != w[1][i]).collect();
        let [i] = moved[..] else {
            return Err(invalid_input("witness step must move exactly one agent"));
        };
        let best = best_response_exact(game, i, &w[0])?;
        if best.contains(&w[0][i]) || !best.contains(&w[1][i]) {
            return Err(invalid_input("witness step is not a best-response improvement"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{MatrixGame, TargetAssignmentGame};

    fn a(ks: &[usize]) -> Vec<ActionIndex> {
        ks.iter().map(|&k| ActionIndex(k)).collect()
    }

    fn matching_pennies() -> GameSpec {
        MatrixGame::from_fn(2, 2, |i, p| {
            let same = p[0] == p[1];
            if (i == 0) == same { 1.0 } else { -1.0 }
        })
        .unwrap()
        .into()
    }

    fn generic_target(n: usize) -> GameSpec {
        let rows = (0..n)
            .map(|i| (0..n).map(|k| 1.0 + (i * 7 + k * 3) as f64 * 0.37 + 0.01 * (i * k) as f64).collect())
            .collect();
        TargetAssignmentGame::from_distances(rows).unwrap().into()
    }

    #[test]
    fn two_agent_target_game_has_two_bijections() {
        let ne = enumerate_pure_ne(&generic_target(2)).unwrap();
        assert_eq!(ne, vec![a(&[0, 1]), a(&[1, 0])]);
    }

    #[test]
    fn matching_pennies_has_no_pure_ne() {
        let g = matching_pennies();
        assert!(enumerate_pure_ne(&g).unwrap().is_empty());
        let report = check_weak_acyclicity(&g).unwrap();
        assert!(!report.weakly_acyclic);
        assert!(report.witnesses.iter().all(Option::is_none));
    }

    #[test]
    fn equilibrium_witness_is_trivial() {
        let g = generic_target(2);
        let report = check_weak_acyclicity(&g).unwrap();
        assert!(report.weakly_acyclic);
        let idx = profile_index(&a(&[1, 0]), 2);
        assert_eq!(report.witnesses[idx].as_ref().unwrap(), &vec![a(&[1, 0])]);
        for path in report.witnesses.iter().flatten() {
            validate_witness(&g, path).unwrap();
        }
    }

    #[test]
    fn best_response_to_single_free_target() {
        let g = generic_target(3);
        // agents 1 and 2 occupy targets 0 and 1; only target 2 is free for agent 0
        assert_eq!(best_response_exact(&g, 0, &a(&[0, 0, 1])).unwrap(), a(&[2]));
    }

    #[test]
    fn best_response_when_everything_is_taken() {
        // two agents on two targets; agent 0 sees both targets occupied only
        // if it is a third agent on a full board
        let g: GameSpec = TargetAssignmentGame::from_distances(vec![vec![1.0, 2.0]; 3])
            .unwrap()
            .into();
        assert_eq!(best_response_exact(&g, 0, &a(&[0, 0, 1])).unwrap(), a(&[0, 1]));
    }

    #[test]
    fn single_agent_unique_max() {
        let g: GameSpec = TargetAssignmentGame::from_distances(vec![vec![3.0, 1.0, 2.0]])
            .unwrap()
            .into();
        assert_eq!(enumerate_pure_ne(&g).unwrap(), vec![a(&[1])]);
        assert!(check_assumption_1(&g).unwrap());
    }

    #[test]
    fn equidistant_free_targets_violate_assumption_1() {
        // N=2, K=3: agent 0 is equidistant from targets 0 and 2, so at the
        // equilibrium (0, 1) it is indifferent between them.
        let g: GameSpec = TargetAssignmentGame::from_distances(vec![
            vec![1.0, 5.0, 1.0],
            vec![4.0, 1.0, 3.0],
        ])
        .unwrap()
        .into();
        assert!(!check_assumption_1(&g).unwrap());
        let violations = assumption_1_violations(&g).unwrap();
        assert!(violations.contains(&(a(&[0, 1]), 0)));
    }

    #[test]
    fn capacity_is_enforced() {
        let g: GameSpec = TargetAssignmentGame::from_distances(vec![vec![1.0; 10]; 7])
            .unwrap()
            .into();
        assert!(matches!(enumerate_pure_ne(&g), Err(Error::Capacity { .. })));
        let g: GameSpec = TargetAssignmentGame::from_distances(vec![vec![1.0; 6]; 7])
            .unwrap()
            .into();
        assert!(matches!(check_weak_acyclicity(&g), Err(Error::Capacity { .. })));
    }
}
