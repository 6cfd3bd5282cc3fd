//! Per-iteration timing of the two halves of the loop across table sizes.

use std::fmt::Write as _;
use std::time::Instant;

use odm_core::harris_wilson::DEFAULT_DT;
use odm_core::nn::DEFAULT_HIDDEN;
use odm_core::pipeline::{kappa_for, Member, PipelineConfig};
use odm_core::seed::member_rng;
use odm_core::{
    AdamConfig, CalibrationProblem, ConstraintSet, CostMatrix, FixedCell, HwParams, IntensityModel,
    LossConfig, ObservedData, Scheme,
};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::config::LOW_NOISE;
use crate::error::{EngineError, Result};
use crate::stats::{linear_fit, median, LinearFit};
use crate::synthetic::generate_synthetic;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub sizes: Vec<(usize, usize)>,
    /// Timed iterations per size.
    pub iterations: usize,
    /// Untimed iterations before timing.
    pub warmup: usize,
    /// Turns the sizes take over the timed iterations.
    pub rounds: usize,
    pub both_margins: bool,
    /// Share of cells fixed to their ground-truth value.
    pub fixed_fraction: f64,
    /// Table total per cell.
    pub mass_per_cell: u64,
    pub scheme: Scheme,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            sizes: Vec::new(),
            iterations: 100,
            warmup: 5,
            rounds: 5,
            both_margins: true,
            fixed_fraction: 0.5,
            mass_per_cell: 10,
            scheme: Scheme::Joint,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkRow {
    pub rows: usize,
    pub cols: usize,
    /// Median seconds per iteration.
    pub intensity_seconds: f64,
    pub table_seconds: f64,
}

impl BenchmarkRow {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    /// Table seconds against `IJ`.
    pub table_fit: Option<LinearFit>,
    pub intensity_fit: Option<LinearFit>,
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rows,cols,cells,intensity_seconds,table_seconds\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.rows,
                r.cols,
                r.cells(),
                r.intensity_seconds,
                r.table_seconds
            );
        }
        s
    }

    pub fn fit_text(&self) -> String {
        let mut s = String::new();
        for (name, fit) in [("table", &self.table_fit), ("intensity", &self.intensity_fit)] {
            if let Some(f) = fit {
                let _ = writeln!(
                    s,
                    "{name}: seconds = {:e} + {:e} * IJ, R^2 = {:.4}",
                    f.intercept, f.slope, f.r_squared
                );
            }
        }
        s
    }
}

/// A benchmark instance: a synthetic table, its margins, and a random
/// `fixed_fraction` of its cells fixed.
pub fn benchmark_problem(spec: &BenchmarkSpec, rows: usize, cols: usize) -> Result<PipelineConfig> {
    if !(0.0..1.0).contains(&spec.fixed_fraction) {
        return Err(EngineError::Config("fixed fraction must lie in [0, 1)".into()));
    }
    let cells = rows * cols;
    let total = spec.mass_per_cell * cells as u64;
    let seed = spec.seed ^ ((rows as u64) << 32 | cols as u64);
    let truth = generate_synthetic(rows, cols, total, seed)?.table;
    let mut rng = member_rng(seed, 1);
    let fixed_count = (spec.fixed_fraction * cells as f64).round() as usize;
    let mut fixed: Vec<usize> = index::sample(&mut rng, cells, fixed_count).into_vec();
    fixed.sort_unstable();
    let mut constraints = ConstraintSet::new().with_fixed_cells(
        fixed
            .into_iter()
            .map(|k| FixedCell::new(k / cols, k % cols, truth.cells()[k]))
            .collect(),
    );
    if spec.both_margins {
        constraints = constraints.with_row_sums(truth.row_sums()).with_col_sums(truth.col_sums());
    } else {
        constraints = constraints.with_total(total);
    }
    let cost = CostMatrix::new(rows, cols, (0..cells).map(|_| rng.random::<f64>()).collect())?;
    let y: Vec<f64> = truth
        .col_sums()
        .iter()
        .map(|&c| ((c as f64 + 1.0) / (total as f64 / cols as f64)).ln())
        .collect();
    let model = IntensityModel::Total { total: total as f64 };
    let kappa = kappa_for(&model, 0.0, &y);
    Ok(PipelineConfig {
        problem: CalibrationProblem {
            cost,
            model,
            hw: HwParams {
                epsilon: 1.0,
                kappa,
                delta: 0.0,
                sigma: LOW_NOISE,
            },
            dt: DEFAULT_DT,
            data: ObservedData {
                log_attraction: Some(y),
                ..ObservedData::default()
            },
            loss: LossConfig::new(spec.scheme),
            theta_max: None,
        },
        constraints,
        hidden: DEFAULT_HIDDEN,
        adam: AdamConfig::default(),
        tau: 1,
        gibbs_moves: 1,
    })
}

struct Timed {
    rows: usize,
    cols: usize,
    cfg: PipelineConfig,
    member: Member<ChaCha20Rng>,
    learn: Vec<f64>,
    sample: Vec<f64>,
}

impl Timed {
    fn new(spec: &BenchmarkSpec, rows: usize, cols: usize) -> Result<Self> {
        let cfg = benchmark_problem(spec, rows, cols)?;
        let mut member = Member::new(&cfg, member_rng(spec.seed, 0))?;
        for _ in 0..spec.warmup {
            member.iterate(&cfg)?;
        }
        Ok(Self {
            rows,
            cols,
            cfg,
            member,
            learn: Vec::with_capacity(spec.iterations),
            sample: Vec::with_capacity(spec.iterations),
        })
    }

    fn time(&mut self, iterations: usize) -> Result<()> {
        for _ in 0..iterations {
            let t0 = Instant::now();
            let step = self.member.learn_intensity(&self.cfg)?;
            let t1 = Instant::now();
            self.member.sample_table(&self.cfg, &step.intensity)?;
            let t2 = Instant::now();
            self.learn.push((t1 - t0).as_secs_f64());
            self.sample.push((t2 - t1).as_secs_f64());
        }
        Ok(())
    }

    fn row(&self) -> BenchmarkRow {
        BenchmarkRow {
            rows: self.rows,
            cols: self.cols,
            intensity_seconds: median(&self.learn).unwrap_or(0.0),
            table_seconds: median(&self.sample).unwrap_or(0.0),
        }
    }
}

/// Median per-iteration time of one size.
pub fn time_size(spec: &BenchmarkSpec, rows: usize, cols: usize) -> Result<BenchmarkRow> {
    let mut t = Timed::new(spec, rows, cols)?;
    t.time(spec.iterations)?;
    Ok(t.row())
}

/// Times every size. The timed iterations are split into `rounds` chunks
/// and the sizes take turns chunk by chunk, so a slow stretch of the
/// machine lands on all sizes rather than on one.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkReport> {
    if spec.iterations == 0 && !spec.sizes.is_empty() {
        return Err(EngineError::Config("benchmark needs at least one iteration".into()));
    }
    let mut timed = spec
        .sizes
        .iter()
        .map(|&(i, j)| Timed::new(spec, i, j))
        .collect::<Result<Vec<_>>>()?;
    let rounds = spec.rounds.clamp(1, spec.iterations.max(1));
    for r in 0..rounds {
        let chunk = spec.iterations * (r + 1) / rounds - spec.iterations * r / rounds;
        for t in &mut timed {
            t.time(chunk)?;
        }
    }
    let rows: Vec<BenchmarkRow> = timed.iter().map(Timed::row).collect();
    let x: Vec<f64> = rows.iter().map(|r| r.cells() as f64).collect();
    let table: Vec<f64> = rows.iter().map(|r| r.table_seconds).collect();
    let learn: Vec<f64> = rows.iter().map(|r| r.intensity_seconds).collect();
    Ok(BenchmarkReport {
        table_fit: linear_fit(&x, &table),
        intensity_fit: linear_fit(&x, &learn),
        rows,
    })
}

/// Parses `100x100,200x200`.
pub fn parse_sizes(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (a, b) = p
                .trim()
                .split_once(['x', 'X'])
                .ok_or_else(|| EngineError::Config(format!("size {p:?} is not IxJ")))?;
            let n = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|n| *n > 0)
                    .ok_or_else(|| EngineError::Config(format!("size {p:?} is not IxJ")))
            };
            Ok((n(a)?, n(b)?))
        })
        .collect()
}
