use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hetalloc::forecast::gradcheck;
use hetalloc::harness::{self, instances, ExperimentConfig, MethodSpec, MetricsReport};
use hetalloc::Error;

/// Forecast-driven task offloading and resource allocation experiments.
#[derive(Debug, Parser)]
#[command(name = "hetalloc", version)]
struct Cli {
    /// JSON config layered over the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Method to run (repeatable): ours, exact, heuristic, dld, mec, gsa.
    #[arg(long = "method", global = true, value_name = "NAME")]
    methods: Vec<String>,
    /// Output directory for reports.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full experiment and write per_task.csv, summary.csv and report.json.
    Run,
    /// Check the exact solver against a brute-force search on small random instances.
    Oracle {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1e-3)]
        power_step: f64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Compare backprop gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 12)]
        cases: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Repeat the experiment for each value of one scalar config key.
    Sweep {
        /// Dotted key, e.g. scenario.n_tasks.
        #[arg(long)]
        key: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn experiment_config(cli: &Cli) -> hetalloc::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => harness::load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if !cli.methods.is_empty() {
        cfg.methods = cli
            .methods
            .iter()
            .map(|m| m.parse())
            .collect::<hetalloc::Result<Vec<MethodSpec>>>()?;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> hetalloc::Result<ExitCode> {
    let cfg = experiment_config(cli)?;
    match &cli.command {
        Command::Run => {
            let report = harness::run_experiment(&cfg)?;
            write_report(&report, &cfg.output_dir)?;
            print_summary(&report);
            Ok(failure_code(&report))
        }
        Command::Sweep { key, values } => {
            let mut code = ExitCode::SUCCESS;
            for (value, report) in harness::sweep(&cfg, key, values)? {
                println!("{key}={value}");
                write_report(&report, &cfg.output_dir.join(format!("{key}={value}")))?;
                print_summary(&report);
                if !report.failures.is_empty() {
                    code = ExitCode::from(2);
                }
            }
            Ok(code)
        }
        Command::Oracle {
            instances: count,
            power_step,
            tolerance,
        } => {
            let report =
                instances::oracle_check(cli.seed.unwrap_or(0), *count, *power_step, *tolerance)?;
            emit_json(
                serde_json::to_string_pretty(&report)?,
                cli.out.as_deref(),
                "oracle.json",
            )?;
            Ok(if report.violations == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Gradcheck {
            cases,
            step,
            tolerance,
        } => {
            let report = gradcheck::audit(cli.seed.unwrap_or(0), *cases, *step)?;
            emit_json(
                serde_json::to_string_pretty(&report)?,
                cli.out.as_deref(),
                "gradcheck.json",
            )?;
            Ok(if report.max_rel_error < *tolerance {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn write_report(report: &MetricsReport, dir: &Path) -> hetalloc::Result<()> {
    for path in harness::emit_report(report, dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn failure_code(report: &MetricsReport) -> ExitCode {
    for f in &report.failures {
        match f.method {
            Some(m) => eprintln!("seed {} {m}: {}", f.seed, f.message),
            None => eprintln!("seed {}: {}", f.seed, f.message),
        }
    }
    if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn print_summary(report: &MetricsReport) {
    println!(
        "{:<10} {:>10} {:>12} {:>10} {:>12}",
        "method", "mean_tet", "mean_energy", "completion", "objective"
    );
    for a in &report.aggregates {
        println!(
            "{:<10} {:>10.4} {:>12.5} {:>10.4} {:>12.5}",
            a.method.name(),
            a.tet.mean,
            a.energy.mean,
            a.mean_completion_rate,
            a.mean_objective
        );
    }
}

fn emit_json(mut text: String, dir: Option<&Path>, name: &str) -> hetalloc::Result<()> {
    text.push('\n');
    print!("{text}");
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}
