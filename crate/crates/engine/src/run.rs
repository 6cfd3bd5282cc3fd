//! Ensemble execution and run directory layout.
//!
//! ```text
//! <output>/config.resolved
//! <output>/samples/{theta,x,table,intensity}.{jsonl,csv}
//! <output>/checkpoints/member-<e>.bin
//! <output>/timings.csv
//! <output>/metrics.csv      (with a ground truth)
//! <output>/heatmap.svg      (with a ground truth and `heatmap = true`)
//! ```
//!
//! `theta` and `x` are written every iteration; `table` and `intensity`
//! only on iterations kept by burn-in and thinning. Members write their own
//! part files, which are concatenated in member order afterwards, so the
//! streams do not depend on the worker count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use odm_core::pipeline::Member;
use odm_core::seed::member_rng;
use rayon::prelude::*;

use crate::config::LoadedRun;
use crate::error::{EngineError, Result};
use crate::evaluate::{evaluate_run, retained, EvalOptions, MetricReport};
use crate::io::{self, StreamFormat, StreamWriter};
use crate::stats::median;
use crate::svg;

pub const STREAMS: [&str; 4] = ["theta", "x", "table", "intensity"];

#[derive(Debug, Clone, PartialEq)]
pub struct MemberReport {
    pub member: usize,
    pub iterations: usize,
    /// Seconds per iteration spent learning the intensity.
    pub learn_seconds: Vec<f64>,
    /// Seconds per iteration spent sampling the table.
    pub sample_seconds: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output: PathBuf,
    pub members: Vec<MemberReport>,
    pub metrics: Option<MetricReport>,
}

impl RunSummary {
    pub fn failed(&self) -> usize {
        self.members.iter().filter(|m| m.error.is_some()).count()
    }
}

fn stream_names(stream: &str, rows: usize, cols: usize) -> Vec<String> {
    match stream {
        "theta" => vec!["alpha".into(), "beta".into()],
        "x" => (1..=cols).map(|j| format!("x_{j}")).collect(),
        "table" | "intensity" => {
            let p = if stream == "table" { "t" } else { "lambda" };
            (1..=rows)
                .flat_map(|i| (1..=cols).map(move |j| format!("{p}_{i}_{j}")))
                .collect()
        }
        _ => unreachable!(),
    }
}

fn part_path(dir: &Path, stream: &str, member: usize, format: StreamFormat) -> PathBuf {
    dir.join("samples")
        .join("parts")
        .join(format!("{stream}.{member}.{}", format.extension()))
}

fn run_member(run: &LoadedRun, member: usize) -> MemberReport {
    let mut report = MemberReport {
        member,
        iterations: 0,
        learn_seconds: Vec::new(),
        sample_seconds: Vec::new(),
        error: None,
    };
    if let Err(e) = drive_member(run, member, &mut report) {
        report.error = Some(e.to_string());
    }
    report
}

fn drive_member(run: &LoadedRun, member: usize, report: &mut MemberReport) -> Result<()> {
    let cfg = &run.config;
    let (rows, cols) = (run.rows(), run.cols());
    let mut writers = STREAMS
        .iter()
        .map(|s| {
            StreamWriter::create(
                &part_path(&cfg.output, s, member, cfg.format),
                cfg.format,
                &stream_names(s, rows, cols),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome = (|| -> Result<()> {
        let pipeline = &run.pipeline;
        let mut m = Member::new(pipeline, member_rng(cfg.seed, member as u64))?;
        for _ in 0..cfg.iterations {
            let t0 = Instant::now();
            let learn = m.learn_intensity(pipeline)?;
            let t1 = Instant::now();
            m.sample_table(pipeline, &learn.intensity)?;
            let t2 = Instant::now();
            report.learn_seconds.push((t1 - t0).as_secs_f64());
            report.sample_seconds.push((t2 - t1).as_secs_f64());
            report.iterations += 1;
            let n = report.iterations;
            writers[0].write(n, member, &[learn.theta.alpha, learn.theta.beta])?;
            writers[1].write(n, member, &learn.x)?;
            if retained(n, cfg.burnin, cfg.thin) {
                writers[2].write(n, member, m.table().cells())?;
                writers[3].write(n, member, learn.intensity.values())?;
            }
        }
        io::write_checkpoint(
            &cfg.output.join("checkpoints").join(format!("member-{member}.bin")),
            m.weights(),
        )
    })();
    for w in writers {
        w.finish()?;
    }
    outcome
}

fn timings_csv(members: &[MemberReport]) -> String {
    let mut s = String::from("member,phase,iterations,total_seconds,median_seconds\n");
    for m in members {
        for (phase, v) in [("intensity", &m.learn_seconds), ("table", &m.sample_seconds)] {
            let _ = writeln!(
                s,
                "{},{phase},{},{},{}",
                m.member,
                v.len(),
                v.iter().sum::<f64>(),
                median(v).unwrap_or(0.0)
            );
        }
    }
    s
}

/// Runs every member of the ensemble and writes the run directory.
///
/// Member failures are recorded in the summary and do not stop the other
/// members.
pub fn run(run: &LoadedRun) -> Result<RunSummary> {
    let cfg = &run.config;
    let out = &cfg.output;
    fs::create_dir_all(out.join("samples")).map_err(|e| EngineError::io(out, e))?;
    io::write_text(&out.join("config.resolved"), &cfg.to_toml())?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| EngineError::Config(e.to_string()))?;
    let members: Vec<MemberReport> =
        pool.install(|| (0..cfg.ensemble).into_par_iter().map(|e| run_member(run, e)).collect());

    for s in STREAMS {
        let parts: Vec<PathBuf> = (0..cfg.ensemble).map(|e| part_path(out, s, e, cfg.format)).collect();
        let dest = out.join("samples").join(format!("{s}.{}", cfg.format.extension()));
        io::concatenate(&dest, &parts, cfg.format == StreamFormat::Csv)?;
    }
    let parts_dir = out.join("samples").join("parts");
    fs::remove_dir(&parts_dir).map_err(|e| EngineError::io(&parts_dir, e))?;
    io::write_text(&out.join("timings.csv"), &timings_csv(&members))?;

    let mut metrics = None;
    if let Some(truth) = &run.ground_truth {
        if members.iter().any(|m| m.error.is_none()) {
            let opts = EvalOptions {
                burnin: cfg.burnin,
                thin: cfg.thin,
                ..EvalOptions::default()
            };
            match evaluate_run(out, truth, &opts) {
                Ok(report) => {
                    io::write_text(&out.join("metrics.csv"), &report.to_csv())?;
                    if cfg.heatmap {
                        write_heatmap(out, truth.rows(), truth.cols(), cfg.burnin, cfg.thin)?;
                    }
                    metrics = Some(report);
                }
                Err(EngineError::Format { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(RunSummary {
        output: out.clone(),
        members,
        metrics,
    })
}

fn write_heatmap(out: &Path, rows: usize, cols: usize, burnin: usize, thin: usize) -> Result<()> {
    let path = crate::evaluate::find_stream(out, "table")?;
    let samples = crate::evaluate::load_samples(&path, rows * cols, burnin, thin)?;
    let mut mean = vec![0.0; rows * cols];
    for s in &samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / samples.len() as f64;
        }
    }
    io::write_text(&out.join("heatmap.svg"), &svg::heatmap(rows, cols, &mean))
}
