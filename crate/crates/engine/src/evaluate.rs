//! Metrics over persisted sample streams.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use odm_core::metrics::{coverage_probability, srmse, ssi, IntervalKind, SampleSummary};
use odm_core::ContingencyTable;

use crate::config::{constraint_tag, RunConfig};
use crate::error::{EngineError, Result};
use crate::io::{self, ConstraintsFile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Coverage level in percent.
    pub q: f64,
    pub burnin: usize,
    pub thin: usize,
    pub interval: IntervalKind,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            q: 99.0,
            burnin: 0,
            thin: 1,
            interval: IntervalKind::HighestDensity,
        }
    }
}

/// Whether 1-based `iteration` survives burn-in and thinning.
pub fn retained(iteration: usize, burnin: usize, thin: usize) -> bool {
    iteration > burnin && (iteration - burnin) % thin.max(1) == 0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceMetrics {
    pub srmse: f64,
    pub ssi: f64,
    pub cp: f64,
    pub samples: usize,
}

pub fn space_metrics<S: AsRef<[f64]>>(
    samples: &[S],
    truth: &ContingencyTable,
    q: f64,
    interval: IntervalKind,
) -> Result<SpaceMetrics> {
    let summary = SampleSummary::new(truth.rows(), truth.cols(), samples)?;
    Ok(SpaceMetrics {
        srmse: srmse(&summary, truth)?,
        ssi: ssi(&summary, truth)?,
        cp: coverage_probability(&summary, truth, q, interval)?,
        samples: summary.count(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub run_id: String,
    pub constraint_tag: String,
    pub q: f64,
    pub table: SpaceMetrics,
    pub intensity: SpaceMetrics,
}

impl MetricReport {
    fn rows(&self) -> Vec<(&'static str, &'static str, f64)> {
        let mut out = Vec::new();
        for (space, m) in [("table", &self.table), ("intensity", &self.intensity)] {
            out.push((space, "srmse", m.srmse));
            out.push((space, "ssi", m.ssi));
            out.push((space, "cp", m.cp));
            out.push((space, "samples", m.samples as f64));
        }
        out
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("run = {}\nconstraints = {}\nq = {}\n", self.run_id, self.constraint_tag, self.q);
        for (space, metric, v) in self.rows() {
            let _ = writeln!(s, "{space}.{metric} = {v}");
        }
        s
    }

    /// `run,constraints,space,metric,value` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("run,constraints,space,metric,value\n");
        for (space, metric, v) in self.rows() {
            let _ = writeln!(s, "{},{},{space},{metric},{v}", self.run_id, self.constraint_tag);
        }
        s
    }
}

/// `samples/<name>.jsonl` or `samples/<name>.csv`.
pub fn find_stream(dir: &Path, name: &str) -> Result<PathBuf> {
    ["jsonl", "csv"]
        .iter()
        .map(|ext| dir.join("samples").join(format!("{name}.{ext}")))
        .find(|p| p.exists())
        .ok_or_else(|| EngineError::format(dir, format!("no {name} stream under samples/")))
}

/// Retained records of a stream, in file order, checked against `cells`.
pub fn load_samples(path: &Path, cells: usize, burnin: usize, thin: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for rec in io::read_stream(path)? {
        if !retained(rec.iteration, burnin, thin) {
            continue;
        }
        if rec.values.len() != cells {
            return Err(EngineError::format(
                path,
                format!("record with {} values, expected {cells}", rec.values.len()),
            ));
        }
        out.push(rec.values);
    }
    if out.is_empty() {
        return Err(EngineError::format(path, "no samples left after burn-in and thinning"));
    }
    Ok(out)
}

fn run_tag(dir: &Path) -> String {
    let cfg = fs::read_to_string(dir.join("config.resolved"))
        .ok()
        .and_then(|t| RunConfig::from_toml(&t).ok());
    match cfg.and_then(|c| c.constraints) {
        Some(c) => ConstraintsFile::resolve(&c, dir)
            .map(|c| constraint_tag(&c))
            .unwrap_or_else(|_| "unknown".into()),
        None => "unknown".into(),
    }
}

/// Pools every member's retained tables and intensities and scores their
/// means against `truth`.
pub fn evaluate_run(dir: &Path, truth: &ContingencyTable, opts: &EvalOptions) -> Result<MetricReport> {
    let cells = truth.rows() * truth.cols();
    let tables = load_samples(&find_stream(dir, "table")?, cells, opts.burnin, opts.thin)?;
    let intensities = load_samples(&find_stream(dir, "intensity")?, cells, opts.burnin, opts.thin)?;
    let run_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    Ok(MetricReport {
        run_id,
        constraint_tag: run_tag(dir),
        q: opts.q,
        table: space_metrics(&tables, truth, opts.q, opts.interval)?,
        intensity: space_metrics(&intensities, truth, opts.q, opts.interval)?,
    })
}
