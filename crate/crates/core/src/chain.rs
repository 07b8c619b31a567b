//! Markov chains induced by fixed policies: stationary distributions, long-run
//! averages and a recurrent-class count used to flag multichain instances.

use std::collections::VecDeque;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};
use crate::model::Action;
use crate::rvi::SparseKernel;
use crate::sparse::CsrMatrix;

/// Transition matrix of the chain obtained by always playing `policy`.
pub fn policy_chain(kernel: &SparseKernel, policy: &[Action]) -> CsrMatrix {
    assert_eq!(policy.len(), kernel.len());
    let rows = policy
        .iter()
        .enumerate()
        .map(|(z, &a)| kernel.matrix(a).row(z).filter(|&(_, w)| w > 0.0).collect());
    CsrMatrix::from_rows(kernel.len(), rows)
}

/// States reachable from `start`, in breadth-first order.
fn reachable(chain: &CsrMatrix, start: usize) -> Vec<usize> {
    let mut seen = vec![false; chain.nrows()];
    let mut order = vec![start];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        for (j, w) in chain.row(i) {
            if w > 0.0 && !seen[j] {
                seen[j] = true;
                order.push(j);
                queue.push_back(j);
            }
        }
    }
    order
}

/// Stationary distribution reached from `start`.
///
/// Only the states reachable from `start` take part. The iteration runs on the
/// lazy chain `(I + P)/2`, which has the same stationary law and is aperiodic.
pub fn stationary_distribution(chain: &CsrMatrix, start: usize, tol: f64, max_iterations: usize) -> Result<Vec<f64>> {
    let states = reachable(chain, start);
    let mut local = vec![usize::MAX; chain.nrows()];
    for (k, &s) in states.iter().enumerate() {
        local[s] = k;
    }
    let sub = CsrMatrix::from_rows(
        states.len(),
        states.iter().map(|&s| chain.row(s).map(|(j, w)| (local[j], w)).collect()),
    );
    let mut pi = vec![1.0 / states.len() as f64; states.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iterations {
        let step = sub.left_mul_vec(&pi);
        let mut next: Vec<f64> = pi.iter().zip(&step).map(|(a, b)| 0.5 * (a + b)).collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if residual < tol {
            let mut full = vec![0.0; chain.nrows()];
            for (k, &s) in states.iter().enumerate() {
                full[s] = pi[k];
            }
            return Ok(full);
        }
    }
    Err(Error::StationaryNotConverged {
        iterations: max_iterations,
        residual,
    })
}

/// Long-run behaviour of a fixed policy.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    /// Average immediate cost per slot (without any command penalty).
    pub average_cost: f64,
    /// Fraction of slots in which the policy commands.
    pub command_rate: f64,
    pub distribution: Vec<f64>,
}

/// Default tolerance (L1 change per lazy step) for [`evaluate_policy`].
pub const STATIONARY_TOL: f64 = 1e-13;

/// Average cost and command rate of `policy` from its stationary distribution.
pub fn evaluate_policy(kernel: &SparseKernel, policy: &[Action], start: usize) -> Result<PolicyEvaluation> {
    let chain = policy_chain(kernel, policy);
    let distribution = stationary_distribution(&chain, start, STATIONARY_TOL, 2_000_000)?;
    let mut average_cost = 0.0;
    let mut command_rate = 0.0;
    for (z, &w) in distribution.iter().enumerate() {
        if w > 0.0 {
            average_cost += w * kernel.cost(policy[z])[z];
            if policy[z].is_command() {
                command_rate += w;
            }
        }
    }
    Ok(PolicyEvaluation {
        average_cost,
        command_rate,
        distribution,
    })
}

/// Number of closed communicating classes (recurrent classes) of the chain.
pub fn recurrent_class_count(chain: &CsrMatrix) -> usize {
    let n = chain.nrows();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, chain.nnz());
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for (j, w) in chain.row(i) {
            if w > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut component = vec![0; n];
    for (c, scc) in sccs.iter().enumerate() {
        for node in scc {
            component[node.index()] = c;
        }
    }
    sccs.iter()
        .enumerate()
        .filter(|(c, scc)| {
            scc.iter()
                .all(|node| chain.row(node.index()).all(|(j, w)| w == 0.0 || component[j] == *c))
        })
        .count()
}
