use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use photonstat_cli::commands::{analyze, saturate, selftest, simulate};
use photonstat_cli::config::RunConfig;
use photonstat_cli::CliError;
use serde::Serialize;

const DEFAULT_OUT_DIR: &str = "photonstat_out";

#[derive(Parser)]
#[command(name = "photonstat", version, about = "Photon-stream simulation and TCSPC analysis")]
struct Cli {
    /// Suppress the JSON summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an emitter and write a .phst stream.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output stream file.
        #[arg(long)]
        out: PathBuf,
        /// Overrides `sim.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Analyze a stream and write the CSV/JSON/SVG bundle.
    Analyze {
        stream: PathBuf,
        /// Run config; only `analysis` and `output` are used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to `output.directory`, then ./photonstat_out.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a fluence sweep and fit the saturation curve.
    Saturate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated fluences in µJ/cm², replacing the config list.
        #[arg(long, value_delimiter = ',')]
        fluences: Option<Vec<f64>>,
        /// Base seed; run i uses base + i.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the oracle-equivalence and analytic-limit checks.
    Selftest,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("PHOTONSTAT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config("PHOTONSTAT_THREADS", format!("`{value}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config("PHOTONSTAT_THREADS", e.to_string()))
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn print<T: Serialize>(quiet: bool, value: &T) {
    if !quiet {
        println!("{}", serde_json::to_string_pretty(value).expect("summaries serialize"));
    }
}

fn load_analysis_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => RunConfig::from_json(r#"{"sim": {"duration_s": 1.0}}"#),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            let summary = simulate::cmd_simulate(&cfg, &out)?;
            print(cli.quiet, &summary);
        }
        Command::Analyze { stream, config, out } => {
            let cfg = load_analysis_config(config.as_deref())?;
            let dir = out_dir(out, &cfg);
            let (analysis, _) = analyze::cmd_analyze(&stream, &cfg.analysis, &cfg.output, &dir)?;
            print(
                cli.quiet,
                &serde_json::json!({
                    "out_dir": dir,
                    "g2_zero_corrected": analysis.g2_summary.g2_zero_corrected,
                    "summary": analysis.summary,
                }),
            );
        }
        Command::Saturate {
            config,
            out,
            fluences,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out_dir(out, &cfg);
            let (s, _) = saturate::cmd_saturate(&cfg, fluences.as_deref(), seed, &dir)?;
            print(cli.quiet, &s.report);
        }
        Command::Selftest => {
            let report = selftest::selftest();
            print(cli.quiet, &report);
            if report.passed != report.total {
                return Err(CliError::SelftestFailed {
                    failed: report.total - report.passed,
                    total: report.total,
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
