//! One function per subcommand. Each writes its artifacts into the output
//! directory and reports timing on stderr only, so artifacts stay byte-stable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use aoi_pomdp::baselines::{exact_mdp_solve, ExactMdpPolicy};
use aoi_pomdp::chain::{policy_chain, recurrent_class_count};
use aoi_pomdp::export::{self, MultiRow, SweepRow, VERSION};
use aoi_pomdp::multi::{multi_simulate, BisectionOptions, Knowledge, MultiEstimate, MultiPolicy, RelaxationCache};
use aoi_pomdp::sim::{simulate_trace, BeliefTablePolicy, ExactBatteryPolicy, GreedyPolicy, MlePolicy};
use aoi_pomdp::structure::{column_violations, policy_threshold_profile};
use aoi_pomdp::{
    sim, BeliefIndex, BeliefMdp, CostEstimate, ModelParams, Network, Policy, RelaxedPolicy, SolveResult,
    TruncatedBeliefSpace,
};
use serde::Serialize;

use crate::config::Resolved;
use crate::CliError;

fn write_artifact(
    r: &Resolved,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> aoi_pomdp::Result<()>,
) -> Result<(), CliError> {
    let path = r.out.join(name);
    let io = |source| CliError::Io {
        path: path.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    body(&mut w)?;
    w.flush().map_err(io)?;
    Ok(())
}

fn timed<T>(label: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    eprintln!("{label}: {:.2?}", start.elapsed());
    out
}

struct Solved {
    mdp: BeliefMdp,
    res: SolveResult,
    recurrent_classes: usize,
}

impl Solved {
    fn policy(&self) -> BeliefTablePolicy {
        BeliefTablePolicy::new(self.mdp.indexer, self.res.policy.clone())
    }
}

fn solve_params(params: &ModelParams) -> Result<Solved, CliError> {
    let mdp = timed("build", || TruncatedBeliefSpace::uniform(params).map(BeliefMdp::build))?;
    let res = timed("solve", || mdp.solve())?;
    let recurrent_classes = recurrent_class_count(&policy_chain(&mdp.kernel, &res.policy));
    if recurrent_classes > 1 {
        eprintln!(
            "warning: the policy chain at lambda={} p={} has {recurrent_classes} recurrent classes; \
             the average cost is reported from the fresh-update state",
            params.lambda, params.p
        );
    }
    Ok(Solved {
        mdp,
        res,
        recurrent_classes,
    })
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    version: &'static str,
    config: &'a Resolved,
    c_star: f64,
    m: usize,
    states: usize,
    iterations: usize,
    span_final: f64,
    residual: f64,
    command_states: usize,
    recurrent_classes: usize,
}

pub fn solve(r: &Resolved) -> Result<(), CliError> {
    let s = solve_params(&r.params)?;
    let header = export::provenance(r)?;
    let summary = SolveSummary {
        version: VERSION,
        config: r,
        c_star: s.res.c_star,
        m: s.mdp.space.depth(),
        states: s.mdp.len(),
        iterations: s.res.iterations,
        span_final: s.res.span_final,
        residual: s.res.residual,
        command_states: s.res.command_count(),
        recurrent_classes: s.recurrent_classes,
    };
    write_artifact(r, "solve.json", |w| export::write_json(w, &summary))?;
    write_artifact(r, "policy.csv", |w| {
        export::write_policy_csv(w, &header, &s.mdp.indexer, &s.res.policy)
    })?;
    write_artifact(r, "values.csv", |w| export::write_values_csv(w, &header, &s.mdp.indexer, &s.res.h))?;
    write_artifact(r, "beliefs.csv", |w| export::write_beliefs_csv(w, &header, &s.mdp.space))?;
    println!("C* = {} (M = {}, {} iterations)", s.res.c_star, summary.m, s.res.iterations);
    Ok(())
}

#[derive(Serialize)]
struct PolicyEstimate {
    policy: String,
    #[serde(flatten)]
    estimate: CostEstimate,
}

/// Simulates each named single-sensor policy on `params`, solving only what is needed.
fn estimate_policies(
    params: &ModelParams,
    names: &[String],
    r: &Resolved,
) -> Result<(Option<Solved>, Vec<PolicyEstimate>), CliError> {
    let solved = match names.iter().any(|n| n == "pomdp") {
        true => Some(solve_params(params)?),
        false => None,
    };
    let space = match &solved {
        Some(s) => s.mdp.space.clone(),
        None => TruncatedBeliefSpace::uniform(params)?,
    };
    let exact: Option<ExactMdpPolicy> = match names.iter().any(|n| n == "exact" || n == "mle") {
        true => Some(timed("exact solve", || exact_mdp_solve(params))?),
        false => None,
    };
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let table;
        let policy: &dyn Policy = match name.as_str() {
            "pomdp" => {
                table = solved.as_ref().expect("solved above").policy();
                &table
            }
            "greedy" => &GreedyPolicy,
            "exact" => &ExactBatteryPolicy(exact.as_ref().expect("solved above")),
            "mle" => &MlePolicy(exact.as_ref().expect("solved above")),
            other => unreachable!("policy names are validated: {other}"),
        };
        let estimate = timed(&format!("simulate {name}"), || sim::simulate(policy, &space, &r.episodes))?;
        out.push(PolicyEstimate {
            policy: name.clone(),
            estimate,
        });
    }
    Ok((solved, out))
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    version: &'static str,
    config: &'a Resolved,
    c_star: Option<f64>,
    estimates: Vec<PolicyEstimate>,
}

pub fn simulate(r: &Resolved) -> Result<(), CliError> {
    let names = r.single_policies()?;
    let (solved, estimates) = estimate_policies(&r.params, &names, r)?;
    for e in &estimates {
        println!("{:>8}  mean {:.4}  stderr {:.4}", e.policy, e.estimate.mean, e.estimate.stderr);
    }
    if r.trace_slots > 0 {
        // The trace follows the first listed policy.
        let space = match &solved {
            Some(s) => s.mdp.space.clone(),
            None => TruncatedBeliefSpace::uniform(&r.params)?,
        };
        let exact = match names[0].as_str() {
            "exact" | "mle" => Some(exact_mdp_solve(&r.params)?),
            _ => None,
        };
        let table = solved.as_ref().map(Solved::policy);
        let policy: &dyn Policy = match names[0].as_str() {
            "pomdp" => table.as_ref().expect("solved above"),
            "exact" => &ExactBatteryPolicy(exact.as_ref().expect("solved above")),
            "mle" => &MlePolicy(exact.as_ref().expect("solved above")),
            _ => &GreedyPolicy,
        };
        let rows = simulate_trace(policy, &space, r.episodes.seed, r.trace_slots)?;
        let header = export::provenance(r)?;
        write_artifact(r, "trace.csv", |w| export::write_trace_csv(w, &header, &rows))?;
    }
    let summary = SimulateSummary {
        version: VERSION,
        config: r,
        c_star: solved.map(|s| s.res.c_star),
        estimates,
    };
    write_artifact(r, "simulate.json", |w| export::write_json(w, &summary))
}

fn sweep_point(base: &ModelParams, param: &str, value: f64) -> Result<ModelParams, CliError> {
    let integer = || {
        if value >= 0.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(CliError::Config(format!("`sweep_values`: {param} needs integers, got {value}")))
        }
    };
    let mut params = *base;
    match param {
        "lambda" => params.lambda = value,
        "p" => params.p = value,
        "battery" => params.battery = integer()?,
        "delta_max" => params.delta_max = integer()?,
        other => {
            return Err(CliError::Config(format!(
                "`sweep_param`: cannot sweep `{other}` (expected lambda, p, battery or delta_max)"
            )))
        }
    }
    params.validate()?;
    Ok(params)
}

pub fn sweep(r: &Resolved) -> Result<(), CliError> {
    let names = r.single_policies()?;
    let param = r
        .sweep_param
        .as_deref()
        .ok_or_else(|| CliError::Config("`sweep_param` (--param) is required for sweep".into()))?;
    if r.sweep_values.is_empty() {
        return Err(CliError::Config("`sweep_values` (--values) is required for sweep".into()));
    }
    let points = r
        .sweep_values
        .iter()
        .map(|&v| sweep_point(&r.params, param, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (params, &value) in points.iter().zip(&r.sweep_values) {
        eprintln!("{param} = {value}");
        let (_, estimates) = estimate_policies(params, &names, r)?;
        rows.extend(estimates.into_iter().map(|e| SweepRow {
            parameter: param.to_string(),
            value,
            policy: e.policy,
            mean: e.estimate.mean,
            stderr: e.estimate.stderr,
            command_rate: e.estimate.command_rate,
        }));
    }
    let header = export::provenance(r)?;
    write_artifact(r, "sweep.csv", |w| export::write_sweep_csv(w, &header, &rows))
}

#[derive(Serialize)]
struct MultiPoint {
    sensors: usize,
    budget: usize,
    gamma: f64,
    relaxed: Option<RelaxedPolicy>,
    relaxed_exact: Option<RelaxedPolicy>,
    estimates: Vec<MultiEstimate>,
}

#[derive(Serialize)]
struct MultiSummary<'a> {
    version: &'static str,
    config: &'a Resolved,
    points: Vec<MultiPoint>,
}

/// Greedy-N runs on the belief network; only the exact-battery kind needs its own.
fn network_slot(kind: MultiPolicy) -> usize {
    usize::from(kind.knowledge() == Some(Knowledge::ExactBattery))
}

pub fn multi(r: &Resolved) -> Result<(), CliError> {
    let kinds = r.multi_policies()?;
    let grid: Vec<(usize, Option<f64>)> = match r.sweep_param.as_deref() {
        None => vec![(r.sensors, r.gamma)],
        Some("sensors") => r
            .sweep_values
            .iter()
            .map(|&k| match k >= 1.0 && k.fract() == 0.0 {
                true => Ok((k as usize, r.gamma)),
                false => Err(CliError::Config(format!("`sweep_values`: sensors needs positive integers, got {k}"))),
            })
            .collect::<Result<_, _>>()?,
        Some("gamma") => r.sweep_values.iter().map(|&g| (r.sensors, Some(g))).collect(),
        Some(other) => {
            return Err(CliError::Config(format!(
                "`sweep_param`: multi sweeps `sensors` or `gamma`, not `{other}`"
            )))
        }
    };
    if grid.is_empty() {
        return Err(CliError::Config("`sweep_values` (--values) is empty".into()));
    }
    let models = grid
        .iter()
        .map(|&(k, g)| r.multi_model(k, g))
        .collect::<Result<Vec<_>, _>>()?;

    let opts = BisectionOptions::default();
    let mut caches = [RelaxationCache::new(), RelaxationCache::new()];
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for model in &models {
        let mut relaxed = [None, None];
        let mut networks = [None, None];
        for (slot, knowledge) in [Knowledge::Belief, Knowledge::ExactBattery].into_iter().enumerate() {
            if !kinds.iter().any(|&k| network_slot(k) == slot) {
                continue;
            }
            let net = Network::build(model, knowledge)?;
            if kinds.iter().any(|k| k.knowledge() == Some(knowledge)) {
                relaxed[slot] = Some(timed(&format!("relax K={} N={}", model.sensors(), model.budget), || {
                    net.relax(&opts, &mut caches[slot])
                })?);
            }
            networks[slot] = Some(net);
        }
        let mut estimates = Vec::new();
        for &kind in &kinds {
            let slot = network_slot(kind);
            let net = networks[slot].as_ref().expect("built above");
            let est = timed(&format!("simulate {}", kind.name()), || {
                multi_simulate(net, relaxed[slot].as_ref(), kind, &r.episodes)
            })?;
            println!(
                "K={:<4} N={:<3} {:>28}  mean {:.4}  stderr {:.4}",
                model.sensors(),
                model.budget,
                kind.name(),
                est.cost.mean,
                est.cost.stderr
            );
            rows.push(MultiRow {
                sensors: model.sensors(),
                budget: model.budget,
                gamma: model.gamma(),
                policy: kind.name().to_string(),
                mean: est.cost.mean,
                stderr: est.cost.stderr,
                mean_commands: est.mean_commands,
                max_commands: est.max_commands,
            });
            estimates.push(est);
        }
        let [relaxed, relaxed_exact] = relaxed;
        points.push(MultiPoint {
            sensors: model.sensors(),
            budget: model.budget,
            gamma: model.gamma(),
            relaxed,
            relaxed_exact,
            estimates,
        });
    }
    let header = export::provenance(r)?;
    write_artifact(r, "multi.csv", |w| export::write_multi_csv(w, &header, &rows))?;
    let summary = MultiSummary {
        version: VERSION,
        config: r,
        points,
    };
    write_artifact(r, "multi.json", |w| export::write_json(w, &summary))
}

#[derive(Serialize)]
struct Thresholds<'a> {
    version: &'static str,
    config: &'a Resolved,
    c_star: f64,
    monotone_in_age: bool,
    idle_commands: usize,
    column_violations: Vec<(BeliefIndex, BeliefIndex, usize)>,
    profile: aoi_pomdp::structure::ThresholdProfile,
}

pub fn policy_dump(r: &Resolved) -> Result<(), CliError> {
    let s = solve_params(&r.params)?;
    let header = export::provenance(r)?;
    write_artifact(r, "policy_grid.csv", |w| {
        export::write_policy_grid_csv(w, &header, &s.mdp.indexer, &s.res.policy)
    })?;
    let profile = policy_threshold_profile(&s.res.policy, &s.mdp.indexer);
    let thresholds = Thresholds {
        version: VERSION,
        config: r,
        c_star: s.res.c_star,
        monotone_in_age: profile.is_monotone(),
        idle_commands: profile.idle_commands.len(),
        column_violations: column_violations(&s.res.policy, &s.mdp.indexer),
        profile,
    };
    println!(
        "monotone in age: {}, idle commands: {}, column violations: {}",
        thresholds.monotone_in_age,
        thresholds.idle_commands,
        thresholds.column_violations.len()
    );
    write_artifact(r, "thresholds.json", |w| export::write_json(w, &thresholds))
}
