//! Comparison policies: request-aware greedy, the optimal policy with exact
//! battery knowledge, and the most-likely-battery heuristic built on top of it.

use crate::belief::Belief;
use crate::error::Result;
use crate::model::{aoi_step, immediate_cost, Action, EnvState, ModelParams};
use crate::rvi::{rvia_solve, RviOptions, SolveResult, SparseKernel};

/// Command exactly when a request is pending.
pub fn greedy_action(request: bool) -> Action {
    Action::from_bit(request)
}

/// Indexing of the fully observed states `(b, r, Δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactIndexer {
    pub battery: usize,
    pub delta_max: usize,
}

impl ExactIndexer {
    pub fn len(&self) -> usize {
        (self.battery + 1) * 2 * self.delta_max
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, battery: usize, request: bool, age: usize) -> usize {
        (battery * 2 + usize::from(request)) * self.delta_max + age - 1
    }

    pub fn state(&self, index: usize) -> (usize, bool, usize) {
        let age = index % self.delta_max + 1;
        let rest = index / self.delta_max;
        (rest / 2, rest % 2 == 1, age)
    }
}

/// Kernel of the MDP in which the edge node observes the battery level.
pub fn build_exact_kernel(params: &ModelParams) -> (ExactIndexer, SparseKernel) {
    let idx = ExactIndexer {
        battery: params.battery,
        delta_max: params.delta_max,
    };
    let (lambda, p, cap) = (params.lambda, params.p, params.battery);
    let mut rows = [Vec::with_capacity(idx.len()), Vec::with_capacity(idx.len())];
    let mut costs = [Vec::with_capacity(idx.len()), Vec::with_capacity(idx.len())];
    for i in 0..idx.len() {
        let (b, r, age) = idx.state(i);
        for action in [Action::Wait, Action::Command] {
            let sent = action.is_command() && b >= 1;
            let spent = b - usize::from(sent);
            let next_age = aoi_step(age, sent, params.delta_max);
            // Harvest lands on top of what is left after transmitting.
            let outcomes = [(spent, 1.0 - lambda), ((spent + 1).min(cap), lambda)];
            let mut row = Vec::with_capacity(4);
            for (nb, wb) in outcomes {
                for (nr, wr) in [(false, 1.0 - p), (true, p)] {
                    row.push((idx.index(nb, nr, next_age), wb * wr));
                }
            }
            let state = EnvState {
                battery: b,
                request: r,
                age,
                known_battery: b.max(1),
            };
            costs[action as usize].push(immediate_cost(&state, action, params.delta_max) as f64);
            rows[action as usize].push(row);
        }
    }
    let [r0, r1] = rows;
    let [c0, c1] = costs;
    (idx, SparseKernel::new(r0, r1, c0, c1))
}

/// Optimal policy with exact battery knowledge.
#[derive(Debug, Clone)]
pub struct ExactMdpPolicy {
    pub indexer: ExactIndexer,
    pub kernel: SparseKernel,
    pub table: Vec<Action>,
    pub c_star_exact: f64,
    pub solve: SolveResult,
}

impl ExactMdpPolicy {
    pub fn action(&self, battery: usize, request: bool, age: usize) -> Action {
        self.table[self.indexer.index(battery, request, age)]
    }

    /// Index of the state `(B, r=0, Δ=1)`.
    pub fn fresh_state(&self) -> usize {
        self.indexer.index(self.indexer.battery, false, 1)
    }
}

pub fn exact_mdp_solve(params: &ModelParams) -> Result<ExactMdpPolicy> {
    exact_mdp_solve_with(params, &RviOptions::new(params.theta))
}

pub fn exact_mdp_solve_with(params: &ModelParams, opts: &RviOptions) -> Result<ExactMdpPolicy> {
    params.validate()?;
    let (indexer, kernel) = build_exact_kernel(params);
    let solve = rvia_solve(&kernel, opts)?;
    Ok(ExactMdpPolicy {
        indexer,
        table: solve.policy.clone(),
        c_star_exact: solve.c_star,
        kernel,
        solve,
    })
}

/// Act as the exact-knowledge policy would at the most likely battery level.
pub fn mle_action(exact: &ExactMdpPolicy, beta: &Belief, request: bool, age: usize) -> Action {
    exact.action(beta.most_likely(), request, age)
}
