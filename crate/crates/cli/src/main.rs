use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::info;
use nurf::benchmarks::BENCHMARKS;
use nurf::experiment::{export_weights, run_to_dir, summarize_file, ExperimentConfig};
use nurf::{Error, SamplerSpec};

#[derive(Parser)]
#[command(name = "nurf", version, about = "Random-feature regression with nonuniform weight sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (sampler, N, replicate) cell of a config.
    Run {
        config: PathBuf,
        /// Overrides as `--dotted.name=value` or `--dotted.name value`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Medians and quartiles per (sampler, N), with SVG charts.
    Summarize { results: PathBuf },
    /// Write sampled hidden weights, one `a_1 .. a_d b` line each.
    ExportWeights {
        config: PathBuf,
        /// Sampler as JSON (`{"kind":"nonlocal_gradient"}`) or a bare kind name.
        #[arg(long)]
        sampler: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Supported benchmark names and dimensions.
    ListBenchmarks,
}

enum Failure {
    Config(anyhow::Error),
    Cells(usize),
    Other(anyhow::Error),
}

fn parse_overrides(args: &[String]) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(key) = arg.strip_prefix("--") else {
            bail!("expected `--name=value`, got `{arg}`");
        };
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().with_context(|| format!("missing value for `--{key}`"))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

fn parse_sampler(raw: &str) -> anyhow::Result<SamplerSpec> {
    let json = if raw.trim_start().starts_with('{') { raw.to_string() } else { format!(r#"{{"kind":"{raw}"}}"#) };
    serde_json::from_str(&json).with_context(|| format!("bad sampler `{raw}`"))
}

fn load(config: &Path, overrides: &[String]) -> Result<ExperimentConfig, Failure> {
    let overrides = parse_overrides(overrides).map_err(Failure::Config)?;
    ExperimentConfig::load(config, &overrides).map_err(|e| Failure::Config(e.into()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let outcome = run_to_dir(&cfg).map_err(|e| match e {
                Error::Config(_) => Failure::Config(e.into()),
                other => Failure::Other(other.into()),
            })?;
            let path = cfg.output_dir.join("results.csv");
            println!("{} cells written to {}", outcome.rows.len(), path.display());
            match outcome.n_failed() {
                0 => Ok(()),
                n => Err(Failure::Cells(n)),
            }
        }
        Command::Summarize { results } => {
            let summary = summarize_file(&results).map_err(|e| Failure::Other(e.into()))?;
            for r in &summary {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4e}"));
                println!(
                    "{:<20} N={:<6} median={} q1={} q3={} failed={}",
                    r.sampler,
                    r.n,
                    fmt(r.median),
                    fmt(r.q1),
                    fmt(r.q3),
                    r.n_failed
                );
            }
            Ok(())
        }
        Command::ExportWeights { config, sampler, n, seed, out, overrides } => {
            let cfg = load(&config, &overrides)?;
            let spec = parse_sampler(&sampler).map_err(Failure::Config)?;
            let written = match &out {
                Some(path) => {
                    let file = fs::File::create(path).map_err(|e| Failure::Other(e.into()))?;
                    export_weights(&cfg, &spec, n, seed, BufWriter::new(file))
                }
                None => export_weights(&cfg, &spec, n, seed, io::stdout().lock()),
            }
            .map_err(|e| match e {
                Error::Config(_) => Failure::Config(e.into()),
                other => Failure::Other(other.into()),
            })?;
            info!("exported {written} weights");
            Ok(())
        }
        Command::ListBenchmarks => {
            for (name, dims) in BENCHMARKS {
                println!("{name:<12} d = {dims}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Cells(n)) => {
            eprintln!("{n} cells failed; see the status column");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
