//! Seeded Monte-Carlo environment for a single sensor.
//!
//! Each episode draws from its own ChaCha stream (`seed`, stream = episode
//! index), so results do not depend on how episodes are scheduled across
//! threads. Within a slot the random draws happen in a fixed order: the
//! harvest of this slot, then the request of the next slot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{greedy_action, ExactMdpPolicy};
use crate::belief::{Belief, BeliefIndex, Observation, TruncatedBeliefSpace};
use crate::belief_mdp::{BeliefState, StateIndexer};
use crate::error::{Error, Result};
use crate::model::{aoi_step, battery_step, on_demand_aoi, Action, ModelParams};

/// Number of batches used for the standard error of a single episode.
const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub slots: usize,
    pub episodes: usize,
    pub seed: u64,
    /// Leading slots excluded from the averages.
    pub warmup: usize,
}

impl EpisodeConfig {
    /// Config with the default warmup of 1% of the slots.
    pub fn new(slots: usize, episodes: usize, seed: u64) -> Self {
        EpisodeConfig {
            slots,
            episodes,
            seed,
            warmup: slots / 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 {
            return Err(Error::invalid("slots", "must be at least 1"));
        }
        if self.episodes == 0 {
            return Err(Error::invalid("episodes", "must be at least 1"));
        }
        if self.warmup >= self.slots {
            return Err(Error::invalid("warmup", "must be smaller than the number of slots"));
        }
        Ok(())
    }

    pub(crate) fn rng(&self, episode: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(episode as u64);
        rng
    }
}

/// Mean over episodes with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub per_episode: Vec<f64>,
    /// Average number of commands per slot.
    pub command_rate: f64,
}

impl CostEstimate {
    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn contains(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

pub(crate) fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// What a policy may look at when deciding. The true battery level is only
/// meant for the exact-knowledge benchmark.
#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub belief_index: BeliefIndex,
    pub belief: &'a Belief,
    pub request: bool,
    pub age: usize,
    pub battery: usize,
}

pub trait Policy: Sync {
    fn act(&self, view: &SlotView<'_>) -> Action;
}

/// Request-aware greedy.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyPolicy;

impl Policy for GreedyPolicy {
    fn act(&self, view: &SlotView<'_>) -> Action {
        greedy_action(view.request)
    }
}

/// Lookup table over belief-states, e.g. a solved belief-MDP policy.
#[derive(Debug, Clone)]
pub struct BeliefTablePolicy {
    pub indexer: StateIndexer,
    pub table: Vec<Action>,
}

impl BeliefTablePolicy {
    pub fn new(indexer: StateIndexer, table: Vec<Action>) -> Self {
        assert_eq!(indexer.len(), table.len());
        BeliefTablePolicy { indexer, table }
    }
}

impl Policy for BeliefTablePolicy {
    fn act(&self, view: &SlotView<'_>) -> Action {
        self.table[self.indexer.index(BeliefState {
            belief: view.belief_index,
            request: view.request,
            age: view.age,
        })]
    }
}

/// Exact-battery optimal policy, fed the true battery level.
#[derive(Debug, Clone, Copy)]
pub struct ExactBatteryPolicy<'a>(pub &'a ExactMdpPolicy);

impl Policy for ExactBatteryPolicy<'_> {
    fn act(&self, view: &SlotView<'_>) -> Action {
        self.0.action(view.battery, view.request, view.age)
    }
}

/// Exact-battery policy evaluated at the most likely battery level of the belief.
#[derive(Debug, Clone, Copy)]
pub struct MlePolicy<'a>(pub &'a ExactMdpPolicy);

impl Policy for MlePolicy<'_> {
    fn act(&self, view: &SlotView<'_>) -> Action {
        crate::baselines::mle_action(self.0, view.belief, view.request, view.age)
    }
}

/// Tracks the belief index from the edge node's observations.
pub fn belief_tracker_step(index: BeliefIndex, action: Action, obs: &Observation, depth: usize) -> Result<BeliefIndex> {
    match action {
        Action::Wait if obs.age == 1 => Err(Error::InconsistentObservation(
            "age reset to 1 without a command".into(),
        )),
        Action::Wait => Ok(index.advanced(depth)),
        Action::Command if obs.age > 1 => Ok(BeliefIndex::reset(None)),
        Action::Command if obs.known_battery == 0 => Err(Error::InconsistentObservation(
            "an update cannot be sent from an empty battery".into(),
        )),
        Action::Command => Ok(BeliefIndex::reset(Some(obs.known_battery))),
    }
}

/// Hidden and observed state of one sensor as seen by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorEnv {
    pub battery: usize,
    pub request: bool,
    pub age: usize,
    pub known_battery: usize,
    pub belief: BeliefIndex,
}

/// Result of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotOutcome {
    pub sent: bool,
    pub cost: usize,
}

impl SensorEnv {
    /// Empty battery, fresh age, reported level `B`, initial belief.
    pub fn initial(params: &ModelParams, request: bool) -> Self {
        SensorEnv {
            battery: 0,
            request,
            age: 1,
            known_battery: params.battery,
            belief: BeliefIndex::new(0, 0),
        }
    }

    pub fn view<'a>(&self, space: &'a TruncatedBeliefSpace) -> SlotView<'a> {
        SlotView {
            belief_index: self.belief,
            belief: space.get(self.belief),
            request: self.request,
            age: self.age,
            battery: self.battery,
        }
    }

    /// Applies `action`, charges the on-demand age, then harvests and draws
    /// the next request.
    pub fn step(&mut self, action: Action, rng: &mut impl Rng, params: &ModelParams, depth: usize) -> Result<SlotOutcome> {
        let sent = action.is_command() && self.battery >= 1;
        let cost = on_demand_aoi(self.request, sent, self.age, params.delta_max);
        let harvested = rng.gen_bool(params.lambda);
        let level = self.battery;
        self.battery = battery_step(level, harvested, sent, params.battery)?;
        self.age = aoi_step(self.age, sent, params.delta_max);
        if sent {
            self.known_battery = level;
        }
        self.request = rng.gen_bool(params.p);
        let obs = Observation {
            request: self.request,
            age: self.age,
            known_battery: self.known_battery,
        };
        self.belief = belief_tracker_step(self.belief, action, &obs, depth)?;
        Ok(SlotOutcome { sent, cost })
    }
}

/// One row of a per-slot trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub battery: usize,
    pub request: bool,
    pub age: usize,
    pub known_battery: usize,
    pub belief_row: usize,
    pub belief_col: usize,
    pub action: u8,
    pub sent: bool,
    pub cost: usize,
}

struct EpisodeStats {
    mean_cost: f64,
    command_rate: f64,
    batch_means: Vec<f64>,
}

fn run_episode(
    policy: &dyn Policy,
    space: &TruncatedBeliefSpace,
    config: &EpisodeConfig,
    episode: usize,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<EpisodeStats> {
    let params = space.params();
    let depth = space.depth();
    let mut rng = config.rng(episode);
    let mut env = SensorEnv::initial(params, rng.gen_bool(params.p));
    let measured = config.slots - config.warmup;
    let batch_len = (measured / BATCHES).max(1);
    let mut batch_means = Vec::with_capacity(BATCHES);
    let (mut total, mut batch_total, mut commands) = (0u64, 0u64, 0u64);
    for t in 0..config.slots {
        let action = policy.act(&env.view(space));
        let before = env;
        let outcome = env.step(action, &mut rng, params, depth)?;
        if let Some(rows) = trace.as_deref_mut() {
            rows.push(TraceRow {
                t,
                battery: before.battery,
                request: before.request,
                age: before.age,
                known_battery: before.known_battery,
                belief_row: before.belief.row,
                belief_col: before.belief.col,
                action: action.bit(),
                sent: outcome.sent,
                cost: outcome.cost,
            });
        }
        if t >= config.warmup {
            total += outcome.cost as u64;
            batch_total += outcome.cost as u64;
            commands += u64::from(action.bit());
            let k = t - config.warmup + 1;
            if k.is_multiple_of(batch_len) && batch_means.len() < BATCHES {
                batch_means.push(batch_total as f64 / batch_len as f64);
                batch_total = 0;
            }
        }
    }
    Ok(EpisodeStats {
        mean_cost: total as f64 / measured as f64,
        command_rate: commands as f64 / measured as f64,
        batch_means,
    })
}

/// Runs `policy` for `config.episodes` episodes and estimates its average cost.
///
/// With several episodes the standard error is taken across episode means;
/// a single episode falls back to batch means.
pub fn simulate(policy: &dyn Policy, space: &TruncatedBeliefSpace, config: &EpisodeConfig) -> Result<CostEstimate> {
    config.validate()?;
    let stats: Vec<EpisodeStats> = (0..config.episodes)
        .into_par_iter()
        .map(|ep| run_episode(policy, space, config, ep, None))
        .collect::<Result<_>>()?;
    let per_episode: Vec<f64> = stats.iter().map(|s| s.mean_cost).collect();
    let (mean, mut stderr) = mean_stderr(&per_episode);
    if config.episodes == 1 && stats[0].batch_means.len() > 1 {
        stderr = mean_stderr(&stats[0].batch_means).1;
    }
    let command_rate = stats.iter().map(|s| s.command_rate).sum::<f64>() / stats.len() as f64;
    Ok(CostEstimate {
        mean,
        stderr,
        per_episode,
        command_rate,
    })
}

/// Per-slot trace of the first episode, limited to `slots` slots.
pub fn simulate_trace(policy: &dyn Policy, space: &TruncatedBeliefSpace, seed: u64, slots: usize) -> Result<Vec<TraceRow>> {
    let config = EpisodeConfig {
        slots,
        episodes: 1,
        seed,
        warmup: 0,
    };
    config.validate()?;
    let mut rows = Vec::with_capacity(slots);
    run_episode(policy, space, &config, 0, Some(&mut rows))?;
    Ok(rows)
}
