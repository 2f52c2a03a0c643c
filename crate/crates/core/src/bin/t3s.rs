//! `t3s` command line: run, sweep, coverage and bench.
//!
//! Exit status is 0 on success, 2 for invalid arguments or configuration and
//! 1 for failures while running.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use t3s_core::harness::{
    bench, coverage_report, run_experiment, sweep, write_outputs, write_sweep_plots,
    ExperimentConfig, OutputFormat, SweepAxis,
};
use t3s_core::Error;

#[derive(Parser)]
#[command(
    name = "t3s",
    version,
    about = "Multi-trial temporal sampling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// One experiment: accuracy plus cost report.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Runs every point along one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// alpha_grid, m_values, k_values, strategy_matrix or aggregators.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values; each axis has a default list.
        #[arg(long)]
        values: Option<String>,
        #[arg(long, value_enum, default_value = "on")]
        plots: Toggle,
    },
    /// Empirical frame coverage against the closed form.
    Coverage {
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        per_trial: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Timed first-token latency on the seeded transformer.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repeats: Option<usize>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out_dir
        .clone()
        .or_else(|| cfg.output.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new(".").to_path_buf())
}

fn format(f: Format) -> OutputFormat {
    match f {
        Format::Json => OutputFormat::Json,
        Format::Csv => OutputFormat::Csv,
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { common } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            let report = run_experiment(&cfg)?;
            let path = write_outputs(
                &report,
                &out_dir(&common, &cfg),
                "run_report",
                format(common.format),
            )?;
            println!(
                "accuracy {} ({}/{}), theoretical speedup {}; wrote {}",
                report.accuracy,
                report.correct,
                report.repeats,
                report.cost.theoretical_speedup,
                path.display()
            );
        }
        Command::Sweep {
            common,
            axis,
            values,
            plots,
        } => {
            let cfg = load(&common)?;
            let axis = SweepAxis::parse(&axis, values.as_deref())?;
            let table = sweep(&axis, &cfg);
            let dir = out_dir(&common, &cfg);
            let stem = format!("sweep_{}", table.axis);
            let path = write_outputs(&table, &dir, &stem, format(common.format))?;
            let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} points ({failed} failed); wrote {}",
                table.rows.len(),
                path.display()
            );
            if plots == Toggle::On {
                for p in write_sweep_plots(&table, &dir)? {
                    println!("wrote {}", p.display());
                }
            }
        }
        Command::Coverage {
            frames,
            per_trial,
            trials,
            draws,
            seed,
        } => {
            if draws < 10_000 || per_trial > frames || trials == 0 || frames == 0 {
                return Err(Error::Config(
                    "coverage needs draws >= 10000, trials >= 1 and per_trial <= frames".into(),
                ));
            }
            let r = coverage_report(frames, per_trial, trials, draws, seed)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Bench { common, repeats } => {
            let mut cfg = load(&common)?;
            cfg.timing = true;
            if let Some(r) = repeats {
                cfg.timing_repeats = r;
            }
            cfg.validate()?;
            let report = bench(&cfg)?;
            let dir = out_dir(&common, &cfg);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("bench_report.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
            println!(
                "L={} speedup measured {:.3} vs theoretical {:.3}; wrote {}",
                report.len,
                report.measured_speedup.unwrap_or(f64::NAN),
                report.theoretical_speedup,
                path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
