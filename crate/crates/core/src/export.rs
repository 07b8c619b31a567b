//! CSV and JSON writers for solve results, belief tables, traces and
//! experiment rows.
//!
//! Every CSV starts with one `#` comment line naming the tool version and the
//! resolved configuration; JSON artifacts carry the same information in
//! `version` and `config` fields. Floats are written in Rust's shortest
//! round-trip form, so equal inputs give byte-equal files.

use std::io::Write;

use serde::Serialize;

use crate::belief::TruncatedBeliefSpace;
use crate::belief_mdp::StateIndexer;
use crate::error::Result;
use crate::model::Action;
use crate::sim::TraceRow;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `aoi-pomdp <version> config=<json>`, the provenance line of every CSV.
pub fn provenance(config: &impl Serialize) -> Result<String> {
    Ok(format!("aoi-pomdp {VERSION} config={}", serde_json::to_string(config)?))
}

fn csv_writer<W: Write>(mut out: W, provenance: &str, header: &[String]) -> Result<csv::Writer<W>> {
    writeln!(out, "# {provenance}")?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Policy table: `row,col,r,delta,action`.
pub fn write_policy_csv<W: Write>(out: W, provenance: &str, indexer: &StateIndexer, policy: &[Action]) -> Result<()> {
    let mut w = csv_writer(out, provenance, &strings(&["row", "col", "r", "delta", "action"]))?;
    for (i, z) in indexer.states().enumerate() {
        w.write_record([
            z.belief.row.to_string(),
            z.belief.col.to_string(),
            u8::from(z.request).to_string(),
            z.age.to_string(),
            policy[i].bit().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Relative values: `row,col,r,delta,h`.
pub fn write_values_csv<W: Write>(out: W, provenance: &str, indexer: &StateIndexer, h: &[f64]) -> Result<()> {
    let mut w = csv_writer(out, provenance, &strings(&["row", "col", "r", "delta", "h"]))?;
    for (i, z) in indexer.states().enumerate() {
        w.write_record([
            z.belief.row.to_string(),
            z.belief.col.to_string(),
            u8::from(z.request).to_string(),
            z.age.to_string(),
            h[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Belief table: `row,col,beta_0,…,beta_B`.
pub fn write_beliefs_csv<W: Write>(out: W, provenance: &str, space: &TruncatedBeliefSpace) -> Result<()> {
    let mut header = strings(&["row", "col"]);
    header.extend((0..space.rows()).map(|j| format!("beta_{j}")));
    let mut w = csv_writer(out, provenance, &header)?;
    for idx in space.indices() {
        let mut rec = vec![idx.row.to_string(), idx.col.to_string()];
        rec.extend(space.get(idx).as_slice().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Policy-structure grid: one line per `(r, delta)`, one column per belief in
/// `(row, col)` order, cells are actions.
pub fn write_policy_grid_csv<W: Write>(out: W, provenance: &str, indexer: &StateIndexer, policy: &[Action]) -> Result<()> {
    let mut header = strings(&["r", "delta"]);
    for row in 0..indexer.rows {
        for col in 0..indexer.cols {
            header.push(format!("b{row}_{col}"));
        }
    }
    let mut w = csv_writer(out, provenance, &header)?;
    let beliefs = indexer.rows * indexer.cols;
    for request in [false, true] {
        for age in 1..=indexer.delta_max {
            let mut rec = vec![u8::from(request).to_string(), age.to_string()];
            for b in 0..beliefs {
                let z = (b * 2 + usize::from(request)) * indexer.delta_max + age - 1;
                rec.push(policy[z].bit().to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-slot trace: `t,b,r,delta,b_tilde,a,d,cost,belief_row,belief_col`.
pub fn write_trace_csv<W: Write>(out: W, provenance: &str, rows: &[TraceRow]) -> Result<()> {
    let header = strings(&["t", "b", "r", "delta", "b_tilde", "a", "d", "cost", "belief_row", "belief_col"]);
    let mut w = csv_writer(out, provenance, &header)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.battery.to_string(),
            u8::from(r.request).to_string(),
            r.age.to_string(),
            r.known_battery.to_string(),
            r.action.to_string(),
            u8::from(r.sent).to_string(),
            r.cost.to_string(),
            r.belief_row.to_string(),
            r.belief_col.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One line of a single-sensor parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub policy: String,
    pub mean: f64,
    pub stderr: f64,
    pub command_rate: f64,
}

pub const SWEEP_COLUMNS: [&str; 6] = ["parameter", "value", "policy", "mean", "stderr", "command_rate"];

pub fn write_sweep_csv<W: Write>(out: W, provenance: &str, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(out, provenance, &strings(&SWEEP_COLUMNS))?;
    for r in rows {
        w.write_record([
            r.parameter.clone(),
            r.value.to_string(),
            r.policy.clone(),
            r.mean.to_string(),
            r.stderr.to_string(),
            r.command_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One line of a multi-sensor experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiRow {
    pub sensors: usize,
    pub budget: usize,
    pub gamma: f64,
    pub policy: String,
    pub mean: f64,
    pub stderr: f64,
    pub mean_commands: f64,
    pub max_commands: usize,
}

pub const MULTI_COLUMNS: [&str; 8] = [
    "sensors",
    "budget",
    "gamma",
    "policy",
    "mean",
    "stderr",
    "mean_commands",
    "max_commands",
];

pub fn write_multi_csv<W: Write>(out: W, provenance: &str, rows: &[MultiRow]) -> Result<()> {
    let mut w = csv_writer(out, provenance, &strings(&MULTI_COLUMNS))?;
    for r in rows {
        w.write_record([
            r.sensors.to_string(),
            r.budget.to_string(),
            r.gamma.to_string(),
            r.policy.clone(),
            r.mean.to_string(),
            r.stderr.to_string(),
            r.mean_commands.to_string(),
            r.max_commands.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write>(mut out: W, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}
