//! Relative value iteration for two-action average-cost MDPs stored as sparse
//! transition matrices.
//!
//! Each sweep computes `v = min(c⁰ + P⁰h, c¹ + P¹h)` and renormalizes
//! `h = v − v(z_ref)`. Iteration stops when the span of `v⁽ⁱ⁾ − v⁽ⁱ⁻¹⁾` drops
//! below `θ`. At that point the Bellman residual
//! `max_z |min_a Q(z,a) − C* − h(z)|` is itself bounded by the final span, so
//! the documented residual constant is `κ = 1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Action;
use crate::sparse::CsrMatrix;

/// Default cap on the number of sweeps.
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

/// Bellman residual bound in units of `θ`.
pub const RESIDUAL_KAPPA: f64 = 1.0;

/// Per-action transition matrices and cost vectors over a finite state space.
#[derive(Debug, Clone)]
pub struct SparseKernel {
    pub p0: CsrMatrix,
    pub p1: CsrMatrix,
    pub c0: Vec<f64>,
    pub c1: Vec<f64>,
    /// Entries per row of `P⁰` and `P¹` as assembled, before duplicate columns were merged.
    pub structural_nnz: (Vec<usize>, Vec<usize>),
}

impl SparseKernel {
    pub fn new(rows0: Vec<Vec<(usize, f64)>>, rows1: Vec<Vec<(usize, f64)>>, c0: Vec<f64>, c1: Vec<f64>) -> Self {
        let n = c0.len();
        assert!(rows0.len() == n && rows1.len() == n && c1.len() == n);
        let s0 = rows0.iter().map(Vec::len).collect();
        let s1 = rows1.iter().map(Vec::len).collect();
        SparseKernel {
            p0: CsrMatrix::from_rows(n, rows0),
            p1: CsrMatrix::from_rows(n, rows1),
            c0,
            c1,
            structural_nnz: (s0, s1),
        }
    }

    pub fn len(&self) -> usize {
        self.c0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c0.is_empty()
    }

    pub fn matrix(&self, action: Action) -> &CsrMatrix {
        match action {
            Action::Wait => &self.p0,
            Action::Command => &self.p1,
        }
    }

    pub fn cost(&self, action: Action) -> &[f64] {
        match action {
            Action::Wait => &self.c0,
            Action::Command => &self.c1,
        }
    }

    /// `(Q(z,0), Q(z,1))` for the relative values `h`.
    pub fn q_values(&self, h: &[f64], z: usize) -> (f64, f64) {
        (self.c0[z] + self.p0.row_dot(z, h), self.c1[z] + self.p1.row_dot(z, h))
    }
}

/// Knobs of [`rvia_solve`].
#[derive(Debug, Clone)]
pub struct RviOptions {
    pub theta: f64,
    pub max_iterations: usize,
    /// Flattened index of the reference state.
    pub reference: usize,
    /// Added to the cost of every command (Lagrange multiplier).
    pub command_penalty: f64,
    /// Starting relative values; zero when absent.
    pub initial: Option<Vec<f64>>,
    /// Weight `τ ∈ (0, 1]` of the aperiodicity transform `τP + (1 − τ)I`.
    /// Values below 1 leave `C*` and the policy unchanged and make the
    /// iteration converge on periodic chains; 1 is plain RVIA.
    pub aperiodicity: f64,
}

impl RviOptions {
    pub fn new(theta: f64) -> Self {
        RviOptions {
            theta,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            reference: 0,
            command_penalty: 0.0,
            initial: None,
            aperiodicity: 1.0,
        }
    }
}

/// Outcome of relative value iteration.
#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    /// Optimal average cost per slot (including any command penalty).
    pub c_star: f64,
    /// Relative values, zero at the reference state.
    #[serde(skip)]
    pub h: Vec<f64>,
    #[serde(skip)]
    pub policy: Vec<Action>,
    pub iterations: usize,
    /// `sp(v⁽ⁱ⁾ − v⁽ⁱ⁻¹⁾)` at termination.
    pub span_final: f64,
    /// `max_z |min_a Q(z,a) − C* − h(z)|` evaluated at the returned `h`.
    pub residual: f64,
}

impl SolveResult {
    pub fn action(&self, z: usize) -> Action {
        self.policy[z]
    }

    pub fn command_count(&self) -> usize {
        self.policy.iter().filter(|a| a.is_command()).count()
    }
}

/// One Bellman sweep: writes `min_a Q` into `v` and the minimizing actions into `policy`.
fn sweep(kernel: &SparseKernel, penalty: f64, tau: f64, h: &[f64], v: &mut [f64], policy: &mut [Action]) {
    for (z, (vz, az)) in v.iter_mut().zip(policy.iter_mut()).enumerate() {
        let stay = (1.0 - tau) * h[z];
        let q0 = kernel.c0[z] + tau * kernel.p0.row_dot(z, h) + stay;
        let q1 = kernel.c1[z] + penalty + tau * kernel.p1.row_dot(z, h) + stay;
        // Ties go to waiting.
        if q1 < q0 {
            *vz = q1;
            *az = Action::Command;
        } else {
            *vz = q0;
            *az = Action::Wait;
        }
    }
}

/// Solves the average-cost Bellman equation by relative value iteration.
pub fn rvia_solve(kernel: &SparseKernel, opts: &RviOptions) -> Result<SolveResult> {
    let n = kernel.len();
    if n == 0 {
        return Err(Error::invalid("kernel", "empty state space"));
    }
    if opts.reference >= n {
        return Err(Error::invalid("reference", format!("{} out of range for {n} states", opts.reference)));
    }
    if !(opts.theta > 0.0) {
        return Err(Error::invalid("theta", "must be positive"));
    }
    let tau = opts.aperiodicity;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid("aperiodicity", format!("{tau} is outside (0, 1]")));
    }
    let mut h = match &opts.initial {
        Some(init) if init.len() == n => init.iter().map(|x| x / tau).collect(),
        Some(_) => return Err(Error::invalid("initial", "length does not match the state space")),
        None => vec![0.0; n],
    };
    let mut v_prev: Vec<f64> = h.clone();
    let mut v = vec![0.0; n];
    let mut policy = vec![Action::Wait; n];
    let mut span = f64::INFINITY;

    for iteration in 1..=opts.max_iterations {
        sweep(kernel, opts.command_penalty, tau, &h, &mut v, &mut policy);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, b) in v.iter().zip(&v_prev) {
            let d = a - b;
            if !d.is_finite() {
                return Err(Error::NonFinite { iteration });
            }
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span = hi - lo;
        let c_star = v[opts.reference];
        for (hz, vz) in h.iter_mut().zip(&v) {
            *hz = vz - c_star;
        }
        std::mem::swap(&mut v, &mut v_prev);
        // The first sweep compares against the arbitrary starting point.
        if iteration > 1 && span < opts.theta {
            // Relative values of the untransformed chain are τ·h.
            h.iter_mut().for_each(|x| *x *= tau);
            // Policy and residual from the final relative values.
            sweep(kernel, opts.command_penalty, 1.0, &h, &mut v, &mut policy);
            let residual = v
                .iter()
                .zip(&h)
                .map(|(vz, hz)| (vz - c_star - hz).abs())
                .fold(0.0, f64::max);
            return Ok(SolveResult {
                c_star,
                h,
                policy,
                iterations: iteration,
                span_final: span,
                residual,
            });
        }
    }
    Err(Error::IterationLimit {
        iterations: opts.max_iterations,
        span,
    })
}
