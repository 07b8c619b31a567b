//! The belief-MDP over truncated beliefs: state indexing, expected costs and the
//! sparse transition matrices for both actions.
//!
//! A belief-state is `(belief index, r, Δ)`. The battery knowledge reported by
//! the last update is not part of it: the value function does not depend on
//! it once the belief is known (see [`build_augmented_kernel`] for the check).

use crate::belief::{BeliefIndex, TruncatedBeliefSpace};
use crate::error::Result;
use crate::model::{Action, ModelParams};
use crate::rvi::{rvia_solve, RviOptions, SolveResult, SparseKernel};

/// Node of the belief-MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BeliefState {
    pub belief: BeliefIndex,
    pub request: bool,
    pub age: usize,
}

/// Bijection between [`BeliefState`]s and `0..|Z|`.
///
/// Flattening is `((belief · 2 + r) · Δmax + Δ − 1)` with beliefs in row-major
/// table order, so index 0 is `((0,0), r=0, Δ=1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateIndexer {
    pub rows: usize,
    pub cols: usize,
    pub delta_max: usize,
}

impl StateIndexer {
    pub fn for_space(space: &TruncatedBeliefSpace) -> Self {
        StateIndexer {
            rows: space.rows(),
            cols: space.cols(),
            delta_max: space.params().delta_max,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols * 2 * self.delta_max
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, z: BeliefState) -> usize {
        let b = z.belief.row * self.cols + z.belief.col;
        (b * 2 + usize::from(z.request)) * self.delta_max + z.age - 1
    }

    pub fn state(&self, index: usize) -> BeliefState {
        let age = index % self.delta_max + 1;
        let rest = index / self.delta_max;
        let request = rest % 2 == 1;
        let b = rest / 2;
        BeliefState {
            belief: BeliefIndex::new(b / self.cols, b % self.cols),
            request,
            age,
        }
    }

    pub fn states(&self) -> impl Iterator<Item = BeliefState> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }
}

/// Expected immediate costs `(c⁰, c¹)` of every belief-state.
pub fn build_cost_vectors(space: &TruncatedBeliefSpace, params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    let indexer = StateIndexer::for_space(space);
    let dmax = params.delta_max;
    indexer
        .states()
        .map(|z| {
            if !z.request {
                return (0.0, 0.0);
            }
            let stale = (z.age + 1).min(dmax) as f64;
            let beta0 = space.get(z.belief).empty_probability();
            (stale, beta0 * stale + (1.0 - beta0))
        })
        .unzip()
}

fn push_pair(row: &mut Vec<(usize, f64)>, indexer: &StateIndexer, belief: BeliefIndex, age: usize, mass: f64, p: f64) {
    for (request, w) in [(false, 1.0 - p), (true, p)] {
        let z = BeliefState { belief, request, age };
        row.push((indexer.index(z), mass * w));
    }
}

/// Per-row entry lists of `P⁰` and `P¹`, in assembly order.
fn transition_rows(space: &TruncatedBeliefSpace, params: &ModelParams) -> (Vec<Vec<(usize, f64)>>, Vec<Vec<(usize, f64)>>) {
    let indexer = StateIndexer::for_space(space);
    let depth = space.depth();
    let p = params.p;
    let mut rows0 = Vec::with_capacity(indexer.len());
    let mut rows1 = Vec::with_capacity(indexer.len());
    for z in indexer.states() {
        let stale = (z.age + 1).min(params.delta_max);

        let mut r0 = Vec::with_capacity(2);
        push_pair(&mut r0, &indexer, z.belief.advanced(depth), stale, 1.0, p);
        rows0.push(r0);

        let beta = space.get(z.belief).as_slice();
        let mut r1 = Vec::with_capacity(2 * beta.len());
        push_pair(&mut r1, &indexer, BeliefIndex::reset(None), stale, beta[0], p);
        for (j, &bj) in beta.iter().enumerate().skip(1) {
            push_pair(&mut r1, &indexer, BeliefIndex::reset(Some(j)), 1, bj, p);
        }
        rows1.push(r1);
    }
    (rows0, rows1)
}

/// Sparse transition matrices `(P⁰, P¹)` together with their per-row
/// structural counts, returned as a kernel with the expected costs.
pub fn build_transition_matrices(space: &TruncatedBeliefSpace, params: &ModelParams) -> SparseKernel {
    let (rows0, rows1) = transition_rows(space, params);
    let (c0, c1) = build_cost_vectors(space, params);
    SparseKernel::new(rows0, rows1, c0, c1)
}

/// `(Q(z,0), Q(z,1))` through the sparse rows of the kernel.
pub fn q_values(h: &[f64], z: BeliefState, indexer: &StateIndexer, kernel: &SparseKernel) -> (f64, f64) {
    kernel.q_values(h, indexer.index(z))
}

/// A truncated belief-MDP ready to be solved.
#[derive(Debug, Clone)]
pub struct BeliefMdp {
    pub space: TruncatedBeliefSpace,
    pub indexer: StateIndexer,
    pub kernel: SparseKernel,
}

impl BeliefMdp {
    pub fn build(space: TruncatedBeliefSpace) -> Self {
        let params = *space.params();
        let indexer = StateIndexer::for_space(&space);
        let kernel = build_transition_matrices(&space, &params);
        BeliefMdp { space, indexer, kernel }
    }

    pub fn params(&self) -> &ModelParams {
        self.space.params()
    }

    pub fn len(&self) -> usize {
        self.indexer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indexer.is_empty()
    }

    /// Index of the state right after a successful update from battery level
    /// `level`, the natural entry point of the recurrent behaviour.
    pub fn fresh_state(&self, level: usize) -> usize {
        self.indexer.index(BeliefState {
            belief: BeliefIndex::reset(Some(level.max(1))),
            request: false,
            age: 1,
        })
    }

    /// Relative value iteration with the reference at index 0.
    pub fn solve(&self) -> Result<SolveResult> {
        rvia_solve(&self.kernel, &RviOptions::new(self.params().theta))
    }

    pub fn solve_with(&self, opts: &RviOptions) -> Result<SolveResult> {
        rvia_solve(&self.kernel, opts)
    }
}

/// Belief-MDP that additionally carries the reported battery level `b̃ ∈ 1..=B`.
///
/// State `z` of the reduced MDP maps to `z · B + (b̃ − 1)`. Solving this kernel
/// and comparing values across `b̃` checks that the reduction loses nothing.
pub fn build_augmented_kernel(space: &TruncatedBeliefSpace, params: &ModelParams) -> SparseKernel {
    let battery = params.battery;
    let (rows0, rows1) = transition_rows(space, params);
    let (c0, c1) = build_cost_vectors(space, params);
    let indexer = StateIndexer::for_space(space);
    let lift = |z: usize, known: usize| z * battery + known - 1;
    let mut a0 = Vec::with_capacity(rows0.len() * battery);
    let mut a1 = Vec::with_capacity(rows1.len() * battery);
    let mut ac0 = Vec::with_capacity(c0.len() * battery);
    let mut ac1 = Vec::with_capacity(c1.len() * battery);
    for (z, (r0, r1)) in rows0.iter().zip(&rows1).enumerate() {
        for known in 1..=battery {
            a0.push(r0.iter().map(|&(t, w)| (lift(t, known), w)).collect());
            a1.push(
                r1.iter()
                    .map(|&(t, w)| {
                        let target = indexer.state(t);
                        // A delivered update reveals the battery level it was sent from.
                        let next_known = if target.age == 1 { target.belief.row } else { known };
                        (lift(t, next_known), w)
                    })
                    .collect(),
            );
            ac0.push(c0[z]);
            ac1.push(c1[z]);
        }
    }
    SparseKernel::new(a0, a1, ac0, ac1)
}

/// Policy as an action per belief-state, paired with its indexer.
pub fn policy_action(policy: &[Action], indexer: &StateIndexer, z: BeliefState) -> Action {
    policy[indexer.index(z)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::Belief;

    fn mdp(lambda: f64, p: f64, battery: usize, dmax: usize, depth: usize) -> BeliefMdp {
        let params = ModelParams::new(lambda, p, battery, dmax).with_depth(depth);
        BeliefMdp::build(TruncatedBeliefSpace::uniform(&params).unwrap())
    }

    #[test]
    fn indexer_round_trips() {
        let m = mdp(0.3, 0.5, 2, 5, 3);
        assert_eq!(m.len(), 2 * 3 * 4 * 5);
        for i in 0..m.len() {
            assert_eq!(m.indexer.index(m.indexer.state(i)), i);
        }
        let z0 = m.indexer.state(0);
        assert_eq!((z0.belief, z0.request, z0.age), (BeliefIndex::new(0, 0), false, 1));
    }

    #[test]
    fn cost_examples() {
        let params = ModelParams::new(0.5, 0.8, 2, 64).with_depth(3);
        let beta0 = Belief::new(vec![0.5, 0.5, 0.0]).unwrap();
        let space = TruncatedBeliefSpace::build(beta0, &params).unwrap();
        let idx = StateIndexer::for_space(&space);
        let (c0, c1) = build_cost_vectors(&space, &params);
        let z = |row, col, request, age| {
            idx.index(BeliefState {
                belief: BeliefIndex::new(row, col),
                request,
                age,
            })
        };
        assert_eq!((c0[z(0, 0, false, 5)], c1[z(0, 0, false, 5)]), (0.0, 0.0));
        // Row 2 is ρ², which has no mass on an empty battery.
        assert_eq!(c1[z(2, 0, true, 5)], 1.0);
        assert!((c1[z(0, 0, true, 5)] - 3.5).abs() < 1e-15);
        assert_eq!(c0[z(0, 0, true, 5)], 6.0);
        assert_eq!(c0[z(0, 0, true, 64)], 64.0);
    }

    #[test]
    fn rows_have_structural_counts() {
        let m = mdp(0.06, 0.8, 3, 8, 4);
        let (s0, s1) = &m.kernel.structural_nnz;
        assert!(s0.iter().all(|&n| n == 2));
        assert!(s1.iter().all(|&n| n == 8));
        for z in 0..m.len() {
            assert!((m.kernel.p0.row_sum(z) - 1.0).abs() < 1e-12);
            assert!((m.kernel.p1.row_sum(z) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn certain_requests_go_to_request_states() {
        let m = mdp(0.2, 1.0, 2, 6, 3);
        for z in 0..m.len() {
            for (t, w) in m.kernel.p0.row(z) {
                if w > 0.0 {
                    assert!(m.indexer.state(t).request);
                }
            }
        }
    }

    #[test]
    fn zero_values_give_costs() {
        let m = mdp(0.2, 0.6, 2, 6, 3);
        let h = vec![0.0; m.len()];
        for z in m.indexer.states() {
            let (q0, q1) = q_values(&h, z, &m.indexer, &m.kernel);
            let i = m.indexer.index(z);
            assert_eq!((q0, q1), (m.kernel.c0[i], m.kernel.c1[i]));
            if !z.request {
                assert_eq!((q0, q1), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn augmented_rows_are_stochastic() {
        let params = ModelParams::new(0.3, 0.7, 2, 5).with_depth(2);
        let space = TruncatedBeliefSpace::uniform(&params).unwrap();
        let k = build_augmented_kernel(&space, &params);
        assert_eq!(k.len(), StateIndexer::for_space(&space).len() * 2);
        for z in 0..k.len() {
            assert!((k.p0.row_sum(z) - 1.0).abs() < 1e-12);
            assert!((k.p1.row_sum(z) - 1.0).abs() < 1e-12);
        }
    }
}
