//! Weight files and CSV reports.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use vahedge_core::evalharness::{EvalReport, PairwiseReport, PnlStats, SensitivityRow};
use vahedge_core::neuralnet::{Architecture, NetworkParams};
use vahedge_core::policygrad::{LogRow, OnlineRow};

pub fn save_weights(params: &NetworkParams, path: &Path) -> Result<()> {
    fs::write(path, params.to_bytes()).with_context(|| format!("cannot write {}", path.display()))
}

/// Loads weights and checks them against the configured architecture.
pub fn load_weights(path: &Path, expected: &Architecture) -> Result<NetworkParams> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    NetworkParams::from_bytes_expecting(&bytes, expected).with_context(|| format!("invalid weight file {}", path.display()))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

pub const STATS_HEADER: [&str; 9] = ["mean", "median", "std_dev", "var90", "var95", "tvar90", "tvar95", "rmse", "count"];

fn stats_fields(s: &PnlStats) -> Vec<String> {
    [s.mean, s.median, s.std_dev, s.var90, s.var95, s.tvar90, s.tvar95, s.rmse]
        .iter()
        .map(f64::to_string)
        .chain(std::iter::once(s.count.to_string()))
        .collect()
}

/// `scenario,pnl`.
pub fn write_pnls(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["scenario", "pnl"])?;
    for (j, p) in report.pnls.iter().enumerate() {
        w.write_record([j.to_string(), p.to_string()])?;
    }
    Ok(w.flush()?)
}

/// `pnl,cdf` points of the empirical distribution.
pub fn write_ecdf(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["pnl", "cdf"])?;
    for (x, f) in report.ecdf() {
        w.write_record([x.to_string(), f.to_string()])?;
    }
    Ok(w.flush()?)
}

/// One row per hedger, in the column order of the summary table.
pub fn write_stats(rows: &[(&str, &PnlStats)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(std::iter::once("hedger").chain(STATS_HEADER))?;
    for (name, s) in rows {
        w.write_record(std::iter::once(name.to_string()).chain(stats_fields(s)))?;
    }
    Ok(w.flush()?)
}

/// Pathwise differences `A - B`, one row per opponent `B`.
pub fn write_pairwise(rows: &[(&str, &PairwiseReport)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["versus", "mean", "median", "std_dev", "prob_non_negative"])?;
    for (name, r) in rows {
        w.write_record([
            name.to_string(),
            r.mean.to_string(),
            r.median.to_string(),
            r.std_dev.to_string(),
            r.prob_non_negative.to_string(),
        ])?;
    }
    Ok(w.flush()?)
}

pub fn write_training_log(log: &[LogRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["update", "timestep", "mean_bootstrapped_return", "batch_entropy", "clip_fraction", "grad_clipped"])?;
    for r in log {
        w.write_record([
            r.update.to_string(),
            r.timestep.to_string(),
            r.mean_bootstrapped_return.to_string(),
            r.batch_entropy.to_string(),
            r.clip_fraction.to_string(),
            r.grad_clipped.to_string(),
        ])?;
    }
    Ok(w.flush()?)
}

/// Rolling evaluation after each online update: mean and RMSE per hedger.
pub fn write_online(rows: &[OnlineRow], benchmark_names: &[&str], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["update".to_string(), "timestep".into(), "spot".into(), "agent_mean".into(), "agent_rmse".into()];
    for b in benchmark_names {
        header.push(format!("{b}_mean"));
        header.push(format!("{b}_rmse"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.update.to_string(),
            r.timestep.to_string(),
            r.spot.to_string(),
            r.agent.mean.to_string(),
            r.agent.rmse.to_string(),
        ];
        for s in &r.benchmarks {
            rec.push(s.mean.to_string());
            rec.push(s.rmse.to_string());
        }
        w.write_record(&rec)?;
    }
    Ok(w.flush()?)
}

/// Two rows per override (agent and correct Delta) in the summary-table columns.
pub fn write_sensitivity(rows: &[SensitivityRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["parameter", "value", "hedger"].into_iter().chain(STATS_HEADER))?;
    for row in rows {
        let (param, value) = match row.change {
            Some(o) => {
                let (k, v) = o.label();
                (k.to_string(), v.to_string())
            }
            None => ("base".to_string(), String::new()),
        };
        for (hedger, stats) in [("rl", &row.rl.stats), ("cfm-bs", &row.delta.stats)] {
            let rec = [param.clone(), value.clone(), hedger.to_string()].into_iter().chain(stats_fields(stats));
            w.write_record(rec)?;
        }
    }
    Ok(w.flush()?)
}
