//! Many sensors sharing a per-slot transmission budget: Lagrangian
//! decomposition, bisection on the multiplier, random truncation to the
//! budget, and the network simulator with its baselines.
//!
//! Sensors with the same harvesting rate share one solved policy ("class"),
//! so the cost of a relaxation grows with the number of distinct rates, not
//! with the number of sensors.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{build_exact_kernel, ExactIndexer};
use crate::belief::TruncatedBeliefSpace;
use crate::belief_mdp::{BeliefMdp, BeliefState, StateIndexer};
use crate::chain::evaluate_policy;
use crate::error::{Error, Result};
use crate::model::{Action, Depth, ModelParams, DEFAULT_THETA};
use crate::rvi::{rvia_solve, RviOptions, SparseKernel};
use crate::sim::{mean_stderr, CostEstimate, EpisodeConfig, SensorEnv, SlotView};

/// Sweeps of plain RVIA before a class solve switches to the transformed chain.
const PLAIN_SWEEPS: usize = 5_000;
const FALLBACK_APERIODICITY: f64 = 0.5;

/// Times the initial upper multiplier may be doubled before giving up.
const MAX_DOUBLINGS: usize = 40;

/// Default cap on the per-class truncation depth.
pub const DEFAULT_DEPTH_CAP: usize = 64;

/// Harvesting rates `0.01, 0.02, …, 0.1, 0.01, …` for `sensors` sensors.
pub fn default_rates(sensors: usize) -> Vec<f64> {
    (0..sensors).map(|k| 0.01 * ((k % 10) + 1) as f64).collect()
}

/// Largest budget `N` with `N / K ≤ Γ`, but at least one.
pub fn budget_for_gamma(sensors: usize, gamma: f64) -> usize {
    ((gamma * sensors as f64 + 1e-9).floor() as usize).max(1)
}

/// A network of sensors that differ only in their harvesting rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiModel {
    pub lambdas: Vec<f64>,
    pub p: f64,
    pub battery: usize,
    pub delta_max: usize,
    /// Commands allowed per slot.
    pub budget: usize,
    pub depth: Depth,
    /// Upper bound on each class's truncation depth.
    pub depth_cap: Option<usize>,
    pub theta: f64,
}

impl MultiModel {
    /// `sensors` sensors with the default cycling rates and budget `⌊Γ·K⌋`.
    pub fn new(sensors: usize, gamma: f64, p: f64, battery: usize, delta_max: usize) -> Self {
        MultiModel {
            lambdas: default_rates(sensors),
            p,
            battery,
            delta_max,
            budget: budget_for_gamma(sensors, gamma),
            depth: Depth::default(),
            depth_cap: Some(DEFAULT_DEPTH_CAP),
            theta: DEFAULT_THETA,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_rates(mut self, lambdas: Vec<f64>) -> Self {
        self.lambdas = lambdas;
        self
    }

    pub fn with_depth(mut self, depth: Depth, cap: Option<usize>) -> Self {
        self.depth = depth;
        self.depth_cap = cap;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn sensors(&self) -> usize {
        self.lambdas.len()
    }

    /// Normalized budget `N / K`.
    pub fn gamma(&self) -> f64 {
        self.budget as f64 / self.sensors() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::invalid("sensors", "need at least one sensor"));
        }
        if self.budget == 0 {
            return Err(Error::invalid("budget", "must allow at least one command per slot"));
        }
        if self.depth_cap == Some(0) {
            return Err(Error::invalid("depth_cap", "must be at least 1"));
        }
        for &lambda in &self.lambdas {
            self.class_params(lambda).validate()?;
        }
        Ok(())
    }

    /// Single-sensor parameters for rate `lambda`, with the depth resolved and capped.
    pub fn class_params(&self, lambda: f64) -> ModelParams {
        let mut params = ModelParams {
            lambda,
            p: self.p,
            battery: self.battery,
            delta_max: self.delta_max,
            depth: self.depth,
            theta: self.theta,
        };
        if params.validate().is_ok() {
            let depth = params.resolved_depth();
            params.depth = Depth::Fixed(self.depth_cap.map_or(depth, |cap| depth.min(cap)));
        }
        params
    }

    /// Distinct rates in order of first appearance, and the class of each sensor.
    pub fn classes(&self) -> (Vec<f64>, Vec<usize>) {
        let mut rates: Vec<f64> = Vec::new();
        let assignment = self
            .lambdas
            .iter()
            .map(|&l| match rates.iter().position(|&r| r == l) {
                Some(c) => c,
                None => {
                    rates.push(l);
                    rates.len() - 1
                }
            })
            .collect();
        (rates, assignment)
    }
}

/// What the edge node knows about each battery when it decides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Knowledge {
    /// Only the belief maintained from the received updates.
    Belief,
    /// The true battery level (benchmark).
    ExactBattery,
}

#[derive(Debug, Clone)]
enum TableIndex {
    Belief(StateIndexer),
    Exact(ExactIndexer),
}

/// Solvable single-sensor model for one harvesting rate.
#[derive(Debug, Clone)]
pub struct ClassModel {
    pub params: ModelParams,
    pub knowledge: Knowledge,
    /// Belief table used by the simulator to track the sensor.
    pub space: TruncatedBeliefSpace,
    pub kernel: SparseKernel,
    /// State from which long-run rates are evaluated.
    pub start: usize,
    index: TableIndex,
}

impl ClassModel {
    pub fn build(params: &ModelParams, knowledge: Knowledge) -> Result<Self> {
        let space = TruncatedBeliefSpace::uniform(params)?;
        let params = *space.params();
        Ok(match knowledge {
            Knowledge::Belief => {
                let mdp = BeliefMdp::build(space.clone());
                let start = mdp.fresh_state(params.battery);
                ClassModel {
                    params,
                    knowledge,
                    space,
                    kernel: mdp.kernel,
                    start,
                    index: TableIndex::Belief(mdp.indexer),
                }
            }
            Knowledge::ExactBattery => {
                let (indexer, kernel) = build_exact_kernel(&params);
                ClassModel {
                    params,
                    knowledge,
                    space,
                    kernel,
                    start: indexer.index(params.battery, false, 1),
                    index: TableIndex::Exact(indexer),
                }
            }
        })
    }

    /// Action of `table` in the situation described by `view`.
    pub fn act(&self, table: &[Action], view: &SlotView<'_>) -> Action {
        let z = match &self.index {
            TableIndex::Belief(idx) => idx.index(BeliefState {
                belief: view.belief_index,
                request: view.request,
                age: view.age,
            }),
            TableIndex::Exact(idx) => idx.index(view.battery, view.request, view.age),
        };
        table[z]
    }
}

/// Single-sensor solution under command penalty `mu`.
#[derive(Debug, Clone, Serialize)]
pub struct ClassSolution {
    pub mu: f64,
    #[serde(skip)]
    pub policy: Vec<Action>,
    /// Optimal penalized average cost.
    pub c_star: f64,
    /// Long-run average age cost of the policy, without the penalty.
    pub cost: f64,
    /// Long-run fraction of slots with a command.
    pub command_rate: f64,
    pub iterations: usize,
}

/// Solves `class` with every command charged an extra `mu`.
pub fn solve_class(class: &ClassModel, mu: f64) -> Result<ClassSolution> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid("mu", format!("{mu} must be a nonnegative number")));
    }
    let mut opts = RviOptions::new(class.params.theta);
    opts.command_penalty = mu;
    opts.max_iterations = PLAIN_SWEEPS;
    // Large penalties produce long, nearly periodic command cycles on which
    // plain RVIA stalls; the aperiodicity transform handles those.
    let solved = match rvia_solve(&class.kernel, &opts) {
        Err(Error::IterationLimit { .. }) => {
            opts.max_iterations = crate::rvi::DEFAULT_MAX_ITERATIONS;
            opts.aperiodicity = FALLBACK_APERIODICITY;
            rvia_solve(&class.kernel, &opts)?
        }
        other => other?,
    };
    let eval = evaluate_policy(&class.kernel, &solved.policy, class.start)?;
    Ok(ClassSolution {
        mu,
        policy: solved.policy,
        c_star: solved.c_star,
        cost: eval.average_cost,
        command_rate: eval.command_rate,
        iterations: solved.iterations,
    })
}

/// Belief-MDP solve of one sensor with command penalty `mu`.
pub fn lagrangian_per_sensor_solve(params: &ModelParams, mu: f64) -> Result<ClassSolution> {
    solve_class(&ClassModel::build(params, Knowledge::Belief)?, mu)
}

/// Memo of class solutions keyed by model and multiplier.
///
/// Every entry is a cold solve, so reusing one across bisections does not
/// change any result.
#[derive(Debug, Default)]
pub struct RelaxationCache {
    entries: HashMap<(String, u64), ClassSolution>,
}

impl RelaxationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn key(class: &ClassModel, mu: f64) -> (String, u64) {
        (format!("{:?}/{:?}", class.params, class.knowledge), mu.to_bits())
    }

    /// Solutions of all `classes` at `mu`, solving the missing ones.
    pub fn solve_all(&mut self, classes: &[ClassModel], mu: f64) -> Result<Vec<ClassSolution>> {
        let missing: Vec<usize> = (0..classes.len())
            .filter(|&c| !self.entries.contains_key(&Self::key(&classes[c], mu)))
            .collect();
        let solved: Vec<ClassSolution> = missing
            .par_iter()
            .map(|&c| solve_class(&classes[c], mu))
            .collect::<Result<_>>()?;
        for (c, sol) in missing.into_iter().zip(solved) {
            self.entries.insert(Self::key(&classes[c], mu), sol);
        }
        Ok(classes.iter().map(|c| self.entries[&Self::key(c, mu)].clone()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionOptions {
    /// Stop once the aggregate rate is within this many commands per slot below the budget.
    pub rate_tol: f64,
    /// Stop once the multiplier bracket is narrower than `mu_tol · max(1, μ_hi)`.
    pub mu_tol: f64,
    pub max_steps: usize,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        BisectionOptions {
            rate_tol: 1e-3,
            mu_tol: 1e-2,
            max_steps: 60,
        }
    }
}

/// Optimal policy of the relaxed problem, taken on the feasible side of the
/// multiplier bracket.
#[derive(Debug, Clone, Serialize)]
pub struct RelaxedPolicy {
    pub mu_star: f64,
    /// Budget the aggregate command rate was held to.
    pub budget: f64,
    /// Per-class solutions at `mu_star`.
    pub classes: Vec<ClassSolution>,
    /// Number of sensors in each class.
    pub weights: Vec<usize>,
    pub aggregate_rate: f64,
    /// `budget − aggregate_rate`, nonnegative.
    pub slack: f64,
    /// Average age cost per sensor of the relaxed policy at `mu_star`.
    pub relaxed_cost: f64,
    /// Lagrangian dual value per sensor at `mu_star`, a lower bound on the
    /// constrained relaxed problem.
    pub dual_bound: f64,
    /// Average cost per sensor with no budget at all (`μ = 0`).
    pub unconstrained_cost: f64,
    pub unconstrained_rate: f64,
    pub steps: usize,
}

fn aggregate(solutions: &[ClassSolution], weights: &[usize]) -> (f64, f64, f64) {
    let mut rate = 0.0;
    let mut cost = 0.0;
    let mut penalized = 0.0;
    for (s, &w) in solutions.iter().zip(weights) {
        rate += w as f64 * s.command_rate;
        cost += w as f64 * s.cost;
        penalized += w as f64 * s.c_star;
    }
    (rate, cost, penalized)
}

/// Bisection on the multiplier so that the aggregate command rate of the
/// per-class policies (class `c` counted `weights[c]` times) stays within `budget`.
pub fn bisect_multiplier(
    classes: &[ClassModel],
    weights: &[usize],
    budget: f64,
    opts: &BisectionOptions,
    cache: &mut RelaxationCache,
) -> Result<RelaxedPolicy> {
    if classes.is_empty() || classes.len() != weights.len() {
        return Err(Error::invalid("classes", "need one weight per class and at least one class"));
    }
    if !(budget > 0.0) {
        return Err(Error::invalid("budget", "must be positive"));
    }
    if !(opts.rate_tol > 0.0 && opts.mu_tol > 0.0) {
        return Err(Error::invalid("tol", "bisection tolerances must be positive"));
    }
    let sensors: usize = weights.iter().sum();
    let finish = |mu: f64, sols: Vec<ClassSolution>, free: &[ClassSolution], steps| {
        let (rate, cost, penalized) = aggregate(&sols, weights);
        let (free_rate, free_cost, _) = aggregate(free, weights);
        RelaxedPolicy {
            mu_star: mu,
            budget,
            aggregate_rate: rate,
            slack: budget - rate,
            relaxed_cost: cost / sensors as f64,
            dual_bound: (penalized - mu * budget) / sensors as f64,
            unconstrained_cost: free_cost / sensors as f64,
            unconstrained_rate: free_rate,
            weights: weights.to_vec(),
            classes: sols,
            steps,
        }
    };

    let free = cache.solve_all(classes, 0.0)?;
    if aggregate(&free, weights).0 <= budget {
        return Ok(finish(0.0, free.clone(), &free, 0));
    }
    // A penalty of p·Δmax does not always silence a sensor: one command can
    // save up to p·Δmax in each of the following slots. Double until feasible.
    let mut lo = 0.0;
    let mut hi = classes
        .iter()
        .map(|c| c.params.p * c.params.delta_max as f64)
        .fold(0.0, f64::max);
    let mut hi_sols = cache.solve_all(classes, hi)?;
    let mut doublings = 0;
    loop {
        let rate = aggregate(&hi_sols, weights).0;
        if rate <= budget {
            break;
        }
        if doublings == MAX_DOUBLINGS {
            return Err(Error::NonBracketing { rate, budget });
        }
        lo = hi;
        hi *= 2.0;
        hi_sols = cache.solve_all(classes, hi)?;
        doublings += 1;
    }
    let mut steps = 0;
    while steps < opts.max_steps && hi - lo > opts.mu_tol * hi.max(1.0) && budget - aggregate(&hi_sols, weights).0 > opts.rate_tol {
        let mid = 0.5 * (lo + hi);
        let sols = cache.solve_all(classes, mid)?;
        if aggregate(&sols, weights).0 <= budget {
            hi = mid;
            hi_sols = sols;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    Ok(finish(hi, hi_sols, &free, steps))
}

/// Sensors `requested` pruned to at most `budget` by a uniformly random subset.
pub fn truncate_commands(requested: &[usize], budget: usize, rng: &mut impl Rng) -> Vec<usize> {
    if requested.len() <= budget {
        return requested.to_vec();
    }
    let mut chosen: Vec<usize> = requested.choose_multiple(rng, budget).copied().collect();
    chosen.sort_unstable();
    chosen
}

/// The `budget` requested sensors with the largest age, ties to the lower id.
pub fn greedy_selection(requested: &[usize], ages: &[usize], budget: usize) -> Vec<usize> {
    let mut order = requested.to_vec();
    order.sort_by(|&a, &b| ages[b].cmp(&ages[a]).then(a.cmp(&b)));
    order.truncate(budget);
    order.sort_unstable();
    order
}

/// A network ready to be relaxed and simulated.
#[derive(Debug, Clone)]
pub struct Network {
    pub model: MultiModel,
    pub knowledge: Knowledge,
    pub classes: Vec<ClassModel>,
    /// Class of each sensor.
    pub assignment: Vec<usize>,
}

impl Network {
    pub fn build(model: &MultiModel, knowledge: Knowledge) -> Result<Self> {
        model.validate()?;
        let (rates, assignment) = model.classes();
        let classes = rates
            .iter()
            .map(|&l| ClassModel::build(&model.class_params(l), knowledge))
            .collect::<Result<_>>()?;
        Ok(Network {
            model: model.clone(),
            knowledge,
            classes,
            assignment,
        })
    }

    pub fn weights(&self) -> Vec<usize> {
        let mut w = vec![0; self.classes.len()];
        for &c in &self.assignment {
            w[c] += 1;
        }
        w
    }

    /// Relaxed policy for the network's budget.
    pub fn relax(&self, opts: &BisectionOptions, cache: &mut RelaxationCache) -> Result<RelaxedPolicy> {
        bisect_multiplier(&self.classes, &self.weights(), self.model.budget as f64, opts, cache)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiPolicy {
    /// Relaxed belief policies, randomly truncated to the budget.
    RelaxTruncate,
    /// Up to `N` requested sensors with the largest age.
    GreedyN,
    /// Relaxed policies without truncation; may exceed the budget.
    LowerBound,
    /// Relaxed exact-battery policies, randomly truncated to the budget.
    ExactBatteryRelaxTruncate,
}

impl MultiPolicy {
    pub const ALL: [MultiPolicy; 4] = [
        MultiPolicy::RelaxTruncate,
        MultiPolicy::GreedyN,
        MultiPolicy::LowerBound,
        MultiPolicy::ExactBatteryRelaxTruncate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MultiPolicy::RelaxTruncate => "relax-truncate",
            MultiPolicy::GreedyN => "greedy-n",
            MultiPolicy::LowerBound => "lower-bound",
            MultiPolicy::ExactBatteryRelaxTruncate => "exact-battery-relax-truncate",
        }
    }

    /// Knowledge the policy's relaxed solutions are built on, if any.
    pub fn knowledge(self) -> Option<Knowledge> {
        match self {
            MultiPolicy::RelaxTruncate | MultiPolicy::LowerBound => Some(Knowledge::Belief),
            MultiPolicy::ExactBatteryRelaxTruncate => Some(Knowledge::ExactBattery),
            MultiPolicy::GreedyN => None,
        }
    }
}

/// Outcome of a network simulation.
#[derive(Debug, Clone, Serialize)]
pub struct MultiEstimate {
    pub policy: MultiPolicy,
    /// Average age cost per sensor and slot; `command_rate` is per sensor.
    pub cost: CostEstimate,
    /// Commands per slot across the network.
    pub mean_commands: f64,
    /// Most commands issued in any single slot, warmup included.
    pub max_commands: usize,
    /// Slots whose commands exceeded the budget.
    pub over_budget_slots: u64,
}

impl MultiEstimate {
    pub fn feasible(&self) -> bool {
        self.over_budget_slots == 0
    }
}

/// Stream of sensor `k` in `episode`; with one sensor this is the
/// single-sensor simulator's stream.
fn sensor_rng(config: &EpisodeConfig, episode: usize, sensors: usize, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream((episode * sensors + k) as u64);
    rng
}

fn truncation_rng(config: &EpisodeConfig, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream((1 << 63) | episode as u64);
    rng
}

struct NetworkEpisode {
    mean_cost: f64,
    mean_commands: f64,
    max_commands: usize,
    over_budget: u64,
}

fn run_network_episode(
    network: &Network,
    tables: Option<&[ClassSolution]>,
    kind: MultiPolicy,
    config: &EpisodeConfig,
    episode: usize,
) -> Result<NetworkEpisode> {
    let k_total = network.model.sensors();
    let budget = network.model.budget;
    let mut rngs: Vec<ChaCha8Rng> = (0..k_total).map(|k| sensor_rng(config, episode, k_total, k)).collect();
    let mut trunc = truncation_rng(config, episode);
    let mut envs: Vec<SensorEnv> = (0..k_total)
        .map(|k| {
            let class = &network.classes[network.assignment[k]];
            SensorEnv::initial(&class.params, rngs[k].gen_bool(class.params.p))
        })
        .collect();
    let mut requested = Vec::with_capacity(k_total);
    let mut ages = vec![0; k_total];
    let mut commanded = vec![false; k_total];
    let (mut total_cost, mut total_commands) = (0u64, 0u64);
    let mut max_commands = 0;
    let mut over_budget = 0;
    for t in 0..config.slots {
        requested.clear();
        for (k, env) in envs.iter().enumerate() {
            let class = &network.classes[network.assignment[k]];
            let wants = match tables {
                Some(sols) => class
                    .act(&sols[network.assignment[k]].policy, &env.view(&class.space))
                    .is_command(),
                None => env.request,
            };
            if wants {
                requested.push(k);
            }
            ages[k] = env.age;
        }
        let selected = match kind {
            MultiPolicy::RelaxTruncate | MultiPolicy::ExactBatteryRelaxTruncate => {
                truncate_commands(&requested, budget, &mut trunc)
            }
            MultiPolicy::GreedyN => greedy_selection(&requested, &ages, budget),
            MultiPolicy::LowerBound => requested.clone(),
        };
        max_commands = max_commands.max(selected.len());
        if selected.len() > budget {
            over_budget += 1;
        }
        commanded.iter_mut().for_each(|c| *c = false);
        for &k in &selected {
            commanded[k] = true;
        }
        let mut slot_cost = 0u64;
        for (k, env) in envs.iter_mut().enumerate() {
            let class = &network.classes[network.assignment[k]];
            let action = Action::from_bit(commanded[k]);
            slot_cost += env.step(action, &mut rngs[k], &class.params, class.space.depth())?.cost as u64;
        }
        if t >= config.warmup {
            total_cost += slot_cost;
            total_commands += selected.len() as u64;
        }
    }
    let measured = (config.slots - config.warmup) as f64;
    Ok(NetworkEpisode {
        mean_cost: total_cost as f64 / measured / k_total as f64,
        mean_commands: total_commands as f64 / measured,
        max_commands,
        over_budget,
    })
}

/// Simulates the network under `kind`. Relaxation-based kinds need the
/// relaxed policy of a network built with the matching [`Knowledge`].
pub fn multi_simulate(
    network: &Network,
    relaxed: Option<&RelaxedPolicy>,
    kind: MultiPolicy,
    config: &EpisodeConfig,
) -> Result<MultiEstimate> {
    config.validate()?;
    let tables = match (kind.knowledge(), relaxed) {
        (None, _) => None,
        (Some(k), Some(r)) if k == network.knowledge && r.classes.len() == network.classes.len() => {
            Some(r.classes.as_slice())
        }
        (Some(_), _) => {
            return Err(Error::invalid(
                "policy",
                format!("{} needs a relaxed policy solved for this network", kind.name()),
            ))
        }
    };
    let episodes: Vec<NetworkEpisode> = (0..config.episodes)
        .into_par_iter()
        .map(|ep| run_network_episode(network, tables, kind, config, ep))
        .collect::<Result<_>>()?;
    let per_episode: Vec<f64> = episodes.iter().map(|e| e.mean_cost).collect();
    let (mean, stderr) = mean_stderr(&per_episode);
    let mean_commands = episodes.iter().map(|e| e.mean_commands).sum::<f64>() / episodes.len() as f64;
    Ok(MultiEstimate {
        policy: kind,
        cost: CostEstimate {
            mean,
            stderr,
            per_episode,
            command_rate: mean_commands / network.model.sensors() as f64,
        },
        mean_commands,
        max_commands: episodes.iter().map(|e| e.max_commands).max().unwrap_or(0),
        over_budget_slots: episodes.iter().map(|e| e.over_budget).sum(),
    })
}
