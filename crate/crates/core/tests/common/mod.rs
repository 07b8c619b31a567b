//! Reference implementations used only by the tests. Nothing here calls the
//! crate's kernel assembly, solver or chain code: beliefs are propagated as
//! plain vectors and chains are stored in hash maps.

#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

/// One step of the battery belief without a command.
pub fn advance(beta: &[f64], lambda: f64) -> Vec<f64> {
    let n = beta.len();
    let mut out = vec![0.0; n];
    for (j, &b) in beta.iter().enumerate() {
        if j + 1 < n {
            out[j] += (1.0 - lambda) * b;
            out[j + 1] += lambda * b;
        } else {
            out[j] += b;
        }
    }
    out
}

/// Belief right after a command that left the sensor with `level` units spent from.
pub fn reset(battery: usize, lambda: f64, level: usize) -> Vec<f64> {
    let mut out = vec![0.0; battery + 1];
    let from = level.saturating_sub(1);
    out[from] += 1.0 - lambda;
    out[from + 1] += lambda;
    out
}

/// Belief-state of the oracle: lineage (0 = initial belief, j = reset from level j),
/// slots since the reset (saturated at `depth`), request bit and age.
pub type OracleState = (usize, usize, bool, usize);

pub struct OracleModel {
    pub lambda: f64,
    pub p: f64,
    pub battery: usize,
    pub delta_max: usize,
    pub depth: usize,
    pub beta0: Vec<f64>,
}

impl OracleModel {
    pub fn belief(&self, lineage: usize, steps: usize) -> Vec<f64> {
        let mut b = if lineage == 0 {
            self.beta0.clone()
        } else {
            reset(self.battery, self.lambda, lineage)
        };
        for _ in 0..steps {
            b = advance(&b, self.lambda);
        }
        b
    }

    /// `(next state, probability)` pairs and the immediate expected cost.
    pub fn step(&self, s: OracleState, command: bool) -> (Vec<(OracleState, f64)>, f64) {
        let (lineage, steps, request, age) = s;
        let beta = self.belief(lineage, steps);
        let stale = (age + 1).min(self.delta_max);
        let mut targets = Vec::new();
        let mut push = |lin, st, a, w: f64| {
            targets.push(((lin, st, false, a), w * (1.0 - self.p)));
            targets.push(((lin, st, true, a), w * self.p));
        };
        let cost;
        if command {
            // An empty battery sends nothing; the resulting belief equals a reset from level 1.
            push(1, 0, stale, beta[0]);
            for (j, &w) in beta.iter().enumerate().skip(1) {
                push(j, 0, 1, w);
            }
            cost = if request { beta[0] * stale as f64 + (1.0 - beta[0]) } else { 0.0 };
        } else {
            push(lineage, (steps + 1).min(self.depth), stale, 1.0);
            cost = if request { stale as f64 } else { 0.0 };
        }
        (targets, cost)
    }
}

/// Long-run average cost and command rate of `policy` from `start`, by power
/// iteration on the lazy chain restricted to the states reachable from `start`.
pub fn evaluate<S, F, P>(start: S, step: F, policy: P) -> (f64, f64)
where
    S: Copy + Eq + std::hash::Hash,
    F: Fn(S, bool) -> (Vec<(S, f64)>, f64),
    P: Fn(S) -> bool,
{
    let mut index: HashMap<S, usize> = HashMap::new();
    let mut states = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(start, 0);
    states.push(start);
    queue.push_back(start);
    let mut edges: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut costs = Vec::new();
    let mut commands = Vec::new();
    while let Some(s) = queue.pop_front() {
        let a = policy(s);
        let (targets, cost) = step(s, a);
        let mut row = Vec::new();
        for (t, w) in targets {
            if w == 0.0 {
                continue;
            }
            let next = *index.entry(t).or_insert_with(|| {
                states.push(t);
                queue.push_back(t);
                states.len() - 1
            });
            row.push((next, w));
        }
        edges.push(row);
        costs.push(cost);
        commands.push(if a { 1.0 } else { 0.0 });
    }
    let n = states.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..5_000_000 {
        let mut next: Vec<f64> = pi.iter().map(|x| 0.5 * x).collect();
        for (i, row) in edges.iter().enumerate() {
            for &(j, w) in row {
                next[j] += 0.5 * pi[i] * w;
            }
        }
        let diff: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-14 {
            break;
        }
    }
    let cost = pi.iter().zip(&costs).map(|(a, b)| a * b).sum();
    let rate = pi.iter().zip(&commands).map(|(a, b)| a * b).sum();
    (cost, rate)
}

/// Transitions of the fully observed model: state `(b, r, Δ)`.
pub fn exact_step(lambda: f64, p: f64, battery: usize, delta_max: usize) -> impl Fn((usize, bool, usize), bool) -> (Vec<((usize, bool, usize), f64)>, f64) {
    move |(b, r, age), command| {
        let sent = command && b > 0;
        let next_age = if sent { 1 } else { (age + 1).min(delta_max) };
        let cost = if !r {
            0.0
        } else if sent {
            1.0
        } else {
            (age + 1).min(delta_max) as f64
        };
        let left = b - usize::from(sent);
        let mut out = Vec::new();
        for (nb, wb) in [(left, 1.0 - lambda), ((left + 1).min(battery), lambda)] {
            out.push(((nb, false, next_age), wb * (1.0 - p)));
            out.push(((nb, true, next_age), wb * p));
        }
        (out, cost)
    }
}
