//! Battery-level beliefs.
//!
//! Without a command the belief evolves through the banded matrix `Λ`; after a
//! command it resets to one of the vectors `ρ^0 … ρ^B`, selected by the outcome
//! the edge node observes. Every reachable belief is therefore `Λ^m` applied to
//! either the initial belief or one of the reset vectors, which is what the
//! truncated table below stores.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, ModelParams};

const SUM_TOLERANCE: f64 = 1e-9;

/// Probability vector over battery levels `0..=B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Validates and renormalizes `entries`.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::invalid("initial_belief", "needs at least two battery levels"));
        }
        if entries.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("initial_belief", "entries must be finite and non-negative"));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid("initial_belief", format!("entries sum to {sum}, not 1")));
        }
        Ok(Belief(entries).normalized())
    }

    pub fn uniform(battery: usize) -> Self {
        let n = battery + 1;
        Belief(vec![1.0 / n as f64; n])
    }

    pub fn point(battery: usize, level: usize) -> Self {
        let mut v = vec![0.0; battery + 1];
        v[level] = 1.0;
        Belief(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn battery(&self) -> usize {
        self.0.len() - 1
    }

    /// Probability that the battery is empty.
    pub fn empty_probability(&self) -> f64 {
        self.0[0]
    }

    /// Most likely battery level; ties go to the lowest level.
    pub fn most_likely(&self) -> usize {
        let mut best = 0;
        for (j, &x) in self.0.iter().enumerate() {
            if x > self.0[best] {
                best = j;
            }
        }
        best
    }

    /// `Λβ`, one slot without a command.
    pub fn advance(&self, lambda: f64) -> Belief {
        let b = self.battery();
        let mut out = vec![0.0; b + 1];
        for (j, &x) in self.0.iter().enumerate() {
            if j == b {
                out[j] += x;
            } else {
                out[j] += (1.0 - lambda) * x;
                out[j + 1] += lambda * x;
            }
        }
        Belief(out).normalized()
    }

    fn normalized(mut self) -> Self {
        let sum: f64 = self.0.iter().sum();
        if sum > 0.0 && sum != 1.0 {
            self.0.iter_mut().for_each(|x| *x /= sum);
        }
        self
    }

    /// Largest absolute difference to the full-battery point mass.
    pub fn distance_to_full(&self) -> f64 {
        let b = self.battery();
        self.0
            .iter()
            .enumerate()
            .map(|(j, &x)| if j == b { (1.0 - x).abs() } else { x.abs() })
            .fold(0.0, f64::max)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("lambda", format!("{lambda} is outside (0, 1]")))
    }
}

/// The left-stochastic one-slot battery operator `Λ`.
pub fn build_lambda(lambda: f64, battery: usize) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    let n = battery + 1;
    let mut m = DMatrix::zeros(n, n);
    for l in 0..n {
        if l == battery {
            m[(l, l)] = 1.0;
        } else {
            m[(l, l)] = 1.0 - lambda;
            m[(l + 1, l)] = lambda;
        }
    }
    Ok(m)
}

/// `Λ^m` from its entrywise closed form: binomial terms below the diagonal and
/// the last row filled in so that every column sums to one.
pub fn lambda_power_closed_form(lambda: f64, battery: usize, m: usize) -> DMatrix<f64> {
    let n = battery + 1;
    let q = 1.0 - lambda;
    let mut out = DMatrix::zeros(n, n);
    for l in 0..n {
        let mut column_sum = 0.0;
        for j in l..battery {
            let k = j - l;
            let value = if k > m {
                0.0
            } else {
                let binom: f64 = (0..k).map(|v| (m - v) as f64 / (v + 1) as f64).product();
                binom * lambda.powi(k as i32) * q.powi((m - k) as i32)
            };
            out[(j, l)] = value;
            column_sum += value;
        }
        out[(battery, l)] = 1.0 - column_sum;
    }
    out
}

/// Reset beliefs `ρ^0 … ρ^B` after a command.
///
/// `ρ^0` (command on an empty battery) coincides with `ρ^1`.
pub fn rho_vectors(lambda: f64, battery: usize) -> Vec<Belief> {
    (0..=battery)
        .map(|j| {
            let mut v = vec![0.0; battery + 1];
            let low = j.max(1) - 1;
            v[low] = 1.0 - lambda;
            v[low + 1] += lambda;
            Belief(v)
        })
        .collect()
}

/// What the edge node sees at the start of the next slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub request: bool,
    pub age: usize,
    /// Battery level carried by the most recent update.
    pub known_battery: usize,
}

/// Bayesian belief update after taking `action` and seeing `obs`.
pub fn update_belief(beta: &Belief, action: Action, obs: &Observation, lambda: f64) -> Result<Belief> {
    check_lambda(lambda)?;
    let battery = beta.battery();
    match action {
        Action::Wait if obs.age == 1 => Err(Error::InconsistentObservation(
            "a fresh update cannot arrive without a command".into(),
        )),
        Action::Wait => Ok(beta.advance(lambda)),
        Action::Command if obs.age > 1 => Ok(rho_vectors(lambda, battery).swap_remove(0)),
        Action::Command => {
            if !(1..=battery).contains(&obs.known_battery) {
                return Err(Error::InconsistentObservation(format!(
                    "reported battery level {} outside 1..={battery}",
                    obs.known_battery
                )));
            }
            Ok(rho_vectors(lambda, battery).swap_remove(obs.known_battery))
        }
    }
}

/// Smallest `m` such that `Λ^m` brings every reset vector, and the empty-battery
/// point mass standing in for any initial belief, within `eps` of a full battery.
pub fn choose_m(lambda: f64, battery: usize, eps: f64) -> usize {
    assert!(lambda > 0.0 && lambda <= 1.0, "lambda must be in (0, 1]");
    let mut beliefs: Vec<Belief> = rho_vectors(lambda, battery);
    beliefs.push(Belief::point(battery, 0));
    let mut m = 0;
    loop {
        let worst = beliefs.iter().map(Belief::distance_to_full).fold(0.0, f64::max);
        if worst <= eps {
            return m;
        }
        beliefs = beliefs.iter().map(|b| b.advance(lambda)).collect();
        m += 1;
    }
}

/// Position of a belief in the truncated table: `row` names the lineage
/// (0 for the initial belief, `j ≥ 1` for `ρ^j`) and `col` counts the
/// consecutive no-command slots since, saturated at `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeliefIndex {
    pub row: usize,
    pub col: usize,
}

impl BeliefIndex {
    pub fn new(row: usize, col: usize) -> Self {
        BeliefIndex { row, col }
    }

    /// Index after a slot without a command.
    pub fn advanced(self, depth: usize) -> Self {
        BeliefIndex {
            row: self.row,
            col: (self.col + 1).min(depth),
        }
    }

    /// Index after a command; `None` means no update came back (`ρ^0`, stored in row 1).
    pub fn reset(reported: Option<usize>) -> Self {
        BeliefIndex {
            row: reported.unwrap_or(1),
            col: 0,
        }
    }
}

/// The `(B+1) × (M+1)` table of reachable beliefs.
#[derive(Debug, Clone)]
pub struct TruncatedBeliefSpace {
    params: ModelParams,
    depth: usize,
    beta0: Belief,
    table: Vec<Belief>,
}

impl TruncatedBeliefSpace {
    pub fn build(beta0: Belief, params: &ModelParams) -> Result<Self> {
        params.validate()?;
        if beta0.battery() != params.battery {
            return Err(Error::invalid(
                "initial_belief",
                format!("has {} entries, expected {}", beta0.as_slice().len(), params.battery + 1),
            ));
        }
        let depth = params.resolved_depth();
        let mut bases = vec![beta0.clone()];
        bases.extend(rho_vectors(params.lambda, params.battery).into_iter().skip(1));
        let mut table = Vec::with_capacity(bases.len() * (depth + 1));
        for base in bases {
            let mut current = base;
            for col in 0..=depth {
                if col > 0 {
                    current = current.advance(params.lambda);
                }
                table.push(current.clone());
            }
        }
        let mut params = *params;
        params.depth = crate::model::Depth::Fixed(depth);
        Ok(TruncatedBeliefSpace {
            params,
            depth,
            beta0,
            table,
        })
    }

    /// Space built from the uniform initial belief.
    pub fn uniform(params: &ModelParams) -> Result<Self> {
        Self::build(Belief::uniform(params.battery), params)
    }

    /// Parameters with the depth resolved to a fixed value.
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn rows(&self) -> usize {
        self.params.battery + 1
    }

    pub fn cols(&self) -> usize {
        self.depth + 1
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn initial_belief(&self) -> &Belief {
        &self.beta0
    }

    pub fn flat(&self, idx: BeliefIndex) -> usize {
        debug_assert!(idx.row < self.rows() && idx.col < self.cols());
        idx.row * self.cols() + idx.col
    }

    pub fn unflat(&self, flat: usize) -> BeliefIndex {
        BeliefIndex::new(flat / self.cols(), flat % self.cols())
    }

    pub fn get(&self, idx: BeliefIndex) -> &Belief {
        &self.table[self.flat(idx)]
    }

    pub fn indices(&self) -> impl Iterator<Item = BeliefIndex> + '_ {
        (0..self.len()).map(|f| self.unflat(f))
    }
}
