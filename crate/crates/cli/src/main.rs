use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pnr_cli::commands::{self, SampleFormat};
use pnr_cli::{CliError, RunConfig};
use pnr_core::Source;

#[derive(Parser)]
#[command(
    name = "pnr",
    version,
    about = "Temporal-array photon-number-resolving detector toolkit"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a click histogram and compare it with the model.
    Simulate {
        /// Poisson source with this mean photon number.
        #[arg(long, conflicts_with = "fock")]
        mu: Option<f64>,
        /// Fock source with this photon number.
        #[arg(long)]
        fock: Option<u32>,
        #[arg(long)]
        n_pulses: Option<u64>,
    },
    /// Estimate the mean photon number from a click sample.
    Estimate {
        sample: PathBuf,
        #[arg(long, value_enum, default_value = "counts")]
        format: Format,
    },
    /// Attenuation sweep with a log-linear fit.
    Sweep {
        /// Comma-separated optical densities.
        #[arg(long, value_delimiter = ',')]
        od_list: Option<Vec<f64>>,
        /// Mean photon number at the smallest optical density.
        #[arg(long)]
        mu0: Option<f64>,
        #[arg(long)]
        n_pulses: Option<u64>,
    },
    /// Single-shot Fock-state classification.
    Classify {
        #[arg(long)]
        m_max: Option<u32>,
    },
    /// Per-bin power against wavelength detuning.
    Bandwidth {
        /// `start:stop:step` in nm.
        #[arg(long, allow_hyphen_values = true)]
        delta_lambda_range: Option<String>,
    },
    /// Bin a time-tag file into a click sample and estimate from it.
    Ingest { timetags: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Counts,
    Histogram,
}

fn parse_range(text: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("delta-lambda-range {text:?}: {e}")))?;
    <[f64; 3]>::try_from(parts)
        .map_err(|_| CliError::Config(format!("delta-lambda-range {text:?}: expected start:stop:step")))
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.common.out {
        cfg.output.dir = out;
    }
    let out = cfg.output.dir.clone();
    let json = match cli.command {
        Command::Simulate { mu, fock, n_pulses } => {
            if let Some(mu) = mu {
                cfg.source = Source::Poisson { mu };
            }
            if let Some(m) = fock {
                cfg.source = Source::Fock { m };
            }
            if let Some(n) = n_pulses {
                cfg.n_pulses = n;
            }
            let r = commands::simulate(&cfg, &out)?;
            serde_json::json!({ "tv_distance": r.tv_distance, "gof": r.gof, "estimate": r.estimate, "runtime_s": r.runtime_s })
        }
        Command::Estimate { sample, format } => {
            let format = match format {
                Format::Counts => SampleFormat::Counts,
                Format::Histogram => SampleFormat::Histogram,
            };
            serde_json::to_value(commands::estimate(&cfg, &sample, format, &out)?.estimate)
                .expect("estimate serializes")
        }
        Command::Sweep { od_list, mu0, n_pulses } => {
            if let Some(ods) = od_list {
                cfg.sweep.od_list = ods;
            }
            if let Some(mu0) = mu0 {
                cfg.sweep.mu0 = mu0;
            }
            if let Some(n) = n_pulses {
                cfg.n_pulses = n;
            }
            serde_json::to_value(commands::sweep(&cfg, &out)?.fit).expect("fit serializes")
        }
        Command::Classify { m_max } => {
            if m_max.is_some() {
                cfg.classify.m_max = m_max;
            }
            let r = commands::classify(&cfg, &out)?;
            serde_json::json!({
                "m_max": r.m_max,
                "success": r.classification.success,
                "max_resolvable": r.classification.max_resolvable,
            })
        }
        Command::Bandwidth { delta_lambda_range } => {
            if let Some(text) = delta_lambda_range {
                cfg.bandwidth.delta_lambda_range = parse_range(&text)?;
            }
            let r = commands::bandwidth(&cfg, &out)?;
            let sizes: Vec<usize> = r.rows.iter().map(|row| row.effective_size).collect();
            serde_json::json!({ "loss": r.loss, "effective_sizes": sizes })
        }
        Command::Ingest { timetags } => {
            let r = commands::ingest(&cfg, &timetags, &out)?;
            serde_json::json!({
                "n_triggers": r.n_triggers,
                "stray_events": r.stray_events,
                "estimate": r.estimate,
            })
        }
    };
    Ok(serde_json::to_string_pretty(&json).expect("summary serializes"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
