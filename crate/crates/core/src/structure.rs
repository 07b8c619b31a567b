//! Structural diagnostics of a solved belief-MDP policy: per-belief age
//! thresholds and the checks behind the threshold-type structure.

use serde::Serialize;

use crate::belief::BeliefIndex;
use crate::belief_mdp::{BeliefState, StateIndexer};
use crate::model::Action;

/// Threshold behaviour of the policy at one belief when a request is pending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BeliefThreshold {
    pub belief: BeliefIndex,
    /// Smallest age at which the policy commands, `None` for never.
    pub threshold: Option<usize>,
    /// Ages at which the policy waits although it commanded at a smaller age.
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdProfile {
    pub beliefs: Vec<BeliefThreshold>,
    /// Belief-states with `r = 0` at which the policy commands.
    pub idle_commands: Vec<(BeliefIndex, usize)>,
}

impl ThresholdProfile {
    pub fn is_monotone(&self) -> bool {
        self.beliefs.iter().all(|b| b.violations.is_empty())
    }

    pub fn threshold(&self, belief: BeliefIndex) -> Option<usize> {
        self.beliefs.iter().find(|b| b.belief == belief).and_then(|b| b.threshold)
    }
}

/// Pairs `(belief, Λ^m belief, Δ)` where the policy commands at the first
/// belief but not at a later column of the same row.
pub fn column_violations(policy: &[Action], indexer: &StateIndexer) -> Vec<(BeliefIndex, BeliefIndex, usize)> {
    let mut out = Vec::new();
    for row in 0..indexer.rows {
        for age in 1..=indexer.delta_max {
            let act = |col| {
                policy[indexer.index(BeliefState {
                    belief: BeliefIndex::new(row, col),
                    request: true,
                    age,
                })]
            };
            // Earliest column that commands; every later column must command too.
            if let Some(first) = (0..indexer.cols).find(|&c| act(c).is_command()) {
                for col in first + 1..indexer.cols {
                    if !act(col).is_command() {
                        out.push((BeliefIndex::new(row, first), BeliefIndex::new(row, col), age));
                    }
                }
            }
        }
    }
    out
}

/// Threshold profile of `policy` over every belief of the table.
pub fn policy_threshold_profile(policy: &[Action], indexer: &StateIndexer) -> ThresholdProfile {
    let mut beliefs = Vec::with_capacity(indexer.rows * indexer.cols);
    let mut idle_commands = Vec::new();
    for row in 0..indexer.rows {
        for col in 0..indexer.cols {
            let belief = BeliefIndex::new(row, col);
            let act = |request, age| policy[indexer.index(BeliefState { belief, request, age })];
            let mut threshold = None;
            let mut violations = Vec::new();
            for age in 1..=indexer.delta_max {
                if act(false, age).is_command() {
                    idle_commands.push((belief, age));
                }
                match (threshold, act(true, age)) {
                    (None, Action::Command) => threshold = Some(age),
                    (Some(_), Action::Wait) => violations.push(age),
                    _ => {}
                }
            }
            beliefs.push(BeliefThreshold {
                belief,
                threshold,
                violations,
            });
        }
    }
    ThresholdProfile { beliefs, idle_commands }
}
