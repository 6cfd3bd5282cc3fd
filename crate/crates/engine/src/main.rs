use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use odm_core::metrics::IntervalKind;
use odm_core::sampler::{enumerate_fiber, fisher_log_pmf, DEFAULT_FIBER_LIMIT};
use odm_core::{math, IntensityMatrix, Scheme};
use odm_engine::benchmark::{parse_sizes, run_benchmark, BenchmarkSpec};
use odm_engine::evaluate::{evaluate_run, EvalOptions};
use odm_engine::io::{self, StreamFormat, StreamWriter};
use odm_engine::synthetic::{generate_from_theta, generate_synthetic, write_problem, write_synthetic};
use odm_engine::{load_run, EngineError, Result, RunConfig};

/// Origin-destination table sampling with neural spatial interaction calibration.
#[derive(Parser)]
#[command(name = "odm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic ground truth: a uniform random intensity and one multinomial table,
    /// or with --alpha and --beta a full calibration problem at equilibrium.
    Generate {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Table total A.
        #[arg(long)]
        total: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, requires = "beta")]
        alpha: Option<f64>,
        #[arg(long, requires = "alpha")]
        beta: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the calibration and sampling loop for every ensemble member.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum)]
        format: Option<StreamFormat>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SRMSE, SSI and coverage of a run against a ground-truth table.
    Evaluate {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
        /// Ground-truth table (CSV).
        #[arg(long)]
        truth: PathBuf,
        /// Coverage level in percent.
        #[arg(long, default_value_t = 99.0)]
        q: f64,
        #[arg(long, default_value_t = 0)]
        burnin: usize,
        #[arg(long, default_value_t = 1)]
        thin: usize,
        /// Equal-tailed instead of shortest intervals.
        #[arg(long)]
        central: bool,
    },
    /// Time intensity learning and table sampling per iteration across sizes.
    Benchmark {
        /// Comma-separated IxJ list.
        #[arg(long, default_value = "100x100,200x200,300x300,400x400,500x500")]
        sizes: String,
        /// Timed iterations per size.
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        /// Turns the sizes take over the timed iterations.
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long, default_value_t = 0.5)]
        fixed_fraction: f64,
        /// Constrain only the total instead of both margins.
        #[arg(long)]
        total_only: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the timings CSV; printed when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List every table of a small fiber, with its probability when an intensity is given.
    Enumerate {
        #[arg(long)]
        constraints: PathBuf,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Intensity matrix (CSV) defining the non-central weights.
        #[arg(long)]
        intensity: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_FIBER_LIMIT)]
        limit: usize,
        #[arg(long, value_enum, default_value_t = StreamFormat::Csv)]
        format: StreamFormat,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate {
            rows,
            cols,
            total,
            seed,
            alpha,
            beta,
            delta,
            out,
        } => {
            match (alpha, beta) {
                (Some(a), Some(b)) => write_problem(&out, &generate_from_theta(rows, cols, total, a, b, delta, seed)?, seed)?,
                _ => write_synthetic(&out, &generate_synthetic(rows, cols, total, seed)?)?,
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Run {
            config,
            seed,
            workers,
            format,
            burnin,
            thin,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            if let Some(f) = format {
                cfg.format = f;
            }
            if let Some(b) = burnin {
                cfg.burnin = b;
            }
            if let Some(t) = thin {
                cfg.thin = t;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            let loaded = load_run(&cfg)?;
            let summary = odm_engine::run(&loaded)?;
            for m in &summary.members {
                if let Some(e) = &m.error {
                    eprintln!("member {} stopped after {} iterations: {e}", m.member, m.iterations);
                }
            }
            if let Some(r) = &summary.metrics {
                print!("{}", r.to_text());
            }
            println!("wrote {}", summary.output.display());
            match summary.failed() {
                0 => Ok(()),
                failed => Err(EngineError::MembersFailed {
                    failed,
                    total: summary.members.len(),
                }),
            }
        }
        Command::Evaluate {
            run,
            truth,
            q,
            burnin,
            thin,
            central,
        } => {
            let truth = io::read_table(&truth)?;
            let opts = EvalOptions {
                q,
                burnin,
                thin,
                interval: if central { IntervalKind::Central } else { IntervalKind::HighestDensity },
            };
            let report = evaluate_run(&run, &truth, &opts)?;
            io::write_text(&run.join("metrics.csv"), &report.to_csv())?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Benchmark {
            sizes,
            iterations,
            rounds,
            fixed_fraction,
            total_only,
            seed,
            out,
        } => {
            let spec = BenchmarkSpec {
                sizes: parse_sizes(&sizes)?,
                iterations,
                rounds,
                fixed_fraction,
                both_margins: !total_only,
                scheme: Scheme::Joint,
                seed,
                ..BenchmarkSpec::default()
            };
            let report = run_benchmark(&spec)?;
            match out {
                Some(p) => io::write_text(&p, &report.to_csv())?,
                None => print!("{}", report.to_csv()),
            }
            eprint!("{}", report.fit_text());
            Ok(())
        }
        Command::Enumerate {
            constraints,
            rows,
            cols,
            intensity,
            limit,
            format,
            out,
        } => {
            let c = io::read_constraints(&constraints)?;
            let fiber = enumerate_fiber(&c, rows, cols, limit)?;
            let lam = intensity
                .map(|p| {
                    let m = io::read_matrix::<f64>(&p)?;
                    Ok::<_, EngineError>(IntensityMatrix::new(m.rows, m.cols, m.values)?)
                })
                .transpose()?
                .unwrap_or(IntensityMatrix::new(rows, cols, vec![1.0; rows * cols])?);
            let logs = fiber
                .iter()
                .map(|t| fisher_log_pmf(t, &lam, &c))
                .collect::<odm_core::Result<Vec<f64>>>()?;
            let z = math::log_sum_exp(&logs);
            let path = out.unwrap_or_else(|| PathBuf::from("/dev/stdout"));
            let mut names: Vec<String> = (1..=rows)
                .flat_map(|i| (1..=cols).map(move |j| format!("t_{i}_{j}")))
                .collect();
            names.push("probability".into());
            let mut w = StreamWriter::create(&path, format, &names)?;
            for (k, (t, l)) in fiber.iter().zip(&logs).enumerate() {
                let mut v: Vec<f64> = t.to_f64();
                v.push(math::exp(l - z));
                w.write(k + 1, 0, &v)?;
            }
            w.finish()?;
            eprintln!("{} tables", fiber.len());
            Ok(())
        }
    }
}
