use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ablation::AblationResult;
use super::metrics::{mean, median};
use super::predict::PredictiveSummary;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub label: String,
    pub seed: u64,
    pub n_records: usize,
    pub median_rel_l2: f64,
    pub mean_rel_l2: f64,
    pub median_r2: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub master_seed: u64,
    pub alpha: f64,
    pub n_samples: usize,
    pub scenarios: Vec<ScenarioSummary>,
}

impl AblationSummary {
    pub fn new(results: &[AblationResult], master_seed: u64, alpha: f64, n_samples: usize) -> Self {
        let scenarios = results
            .iter()
            .map(|r| ScenarioSummary {
                label: r.label.clone(),
                seed: r.seed,
                n_records: r.entries.len(),
                median_rel_l2: r.median_rel_l2,
                mean_rel_l2: r.mean_rel_l2,
                median_r2: median(&r.entries.iter().map(|e| e.r2).collect::<Vec<_>>()),
                coverage: r.coverage,
            })
            .collect();
        Self { master_seed, alpha, n_samples, scenarios }
    }
}

/// `scenario,record_id,rel_l2,r2` rows for every scenario and record.
pub fn records_csv(results: &[AblationResult]) -> String {
    let mut out = String::from("scenario,record_id,rel_l2,r2\n");
    for r in results {
        for e in &r.entries {
            let _ = writeln!(out, "{},{},{:.16e},{:.16e}", r.label, e.record_id, e.rel_l2, e.r2);
        }
    }
    out
}

pub fn summary_json(summary: &AblationSummary) -> Result<String> {
    Ok(serde_json::to_string_pretty(summary)? + "\n")
}

/// `time,truth,mean,ci_lo,ci_hi` with `time = (k + 1)·dt`, matching the
/// decimated output grid.
pub fn plot_csv(summary: &PredictiveSummary, truth: Option<&[f64]>, dt: f64) -> Result<String> {
    if let Some(t) = truth {
        if t.len() != summary.len() {
            return Err(Error::dim("truth length", summary.len(), t.len()));
        }
    }
    let mut out = String::from("time,truth,mean,ci_lo,ci_hi\n");
    for k in 0..summary.len() {
        let truth = truth.map(|t| format!("{:.16e}", t[k])).unwrap_or_default();
        let _ = writeln!(
            out,
            "{:.6},{},{:.16e},{:.16e},{:.16e}",
            (k + 1) as f64 * dt,
            truth,
            summary.mean[k],
            summary.ci_lo[k],
            summary.ci_hi[k]
        );
    }
    Ok(out)
}

pub fn write_plot_csv(path: impl AsRef<Path>, summary: &PredictiveSummary, truth: Option<&[f64]>, dt: f64) -> Result<()> {
    fs::write(path, plot_csv(summary, truth, dt)?)?;
    Ok(())
}

/// Writes `records.csv`, `summary.json` and, per scenario, one plot CSV for
/// each of the first `plot_records` test records.
pub fn write_results(
    dir: impl AsRef<Path>,
    results: &[AblationResult],
    summary: &AblationSummary,
    truths: &[Vec<f64>],
    dt: f64,
    plot_records: usize,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("records.csv"), records_csv(results))?;
    fs::write(dir.join("summary.json"), summary_json(summary)?)?;
    let plots = dir.join("plots");
    for r in results {
        for (i, s) in r.summaries.iter().take(plot_records).enumerate() {
            fs::create_dir_all(&plots)?;
            let truth = truths.get(i).map(Vec::as_slice);
            write_plot_csv(plots.join(format!("{}_record{i}.csv", r.label)), s, truth, dt)?;
        }
    }
    Ok(())
}

/// Recomputes per-scenario medians from a records CSV (used to cross-check
/// a summary written alongside it).
pub fn medians_from_records_csv(csv: &str) -> Result<Vec<(String, f64, f64)>> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for line in csv.lines().skip(1).filter(|l| !l.is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!("bad records row: {line}")));
        }
        let v: f64 = cols[2].parse().map_err(|_| Error::Format(format!("bad rel_l2 in: {line}")))?;
        match groups.iter_mut().find(|(l, _)| l == cols[0]) {
            Some((_, vals)) => vals.push(v),
            None => groups.push((cols[0].to_string(), vec![v])),
        }
    }
    Ok(groups.into_iter().map(|(l, v)| (l, median(&v), mean(&v))).collect())
}
