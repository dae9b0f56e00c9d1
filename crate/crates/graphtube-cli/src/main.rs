use anyhow::Context;
use clap::Parser;
use graphtube::harness::{run_experiment, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

const KINDS: &[&str] = &[
    "graph-spectrum",
    "manifold-spectrum",
    "converge-delta",
    "converge-deltaprime-graph",
    "converge-deltaprime-chain",
    "closeness-suite",
    "constants",
    "noroot-scan",
    "validate-fem",
];

/// Spectral experiments for star graphs and their fattened tube domains.
///
/// Reads a JSON config, runs the named experiment, and writes report.json
/// plus CSV tables and SVG plots into the output directory. Exit code 0
/// means every check passed, 2 means the run finished but a check failed,
/// 1 means the run itself errored.
#[derive(Parser)]
#[command(name = "graphtube", version)]
struct Cli {
    /// experiment to run
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(KINDS))]
    experiment: String,
    /// JSON config file
    #[arg(long)]
    config: PathBuf,
    /// output directory
    #[arg(long)]
    out: PathBuf,
    /// override the seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// cap the worker thread count
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("cannot size the thread pool")?;
    }
    let text = std::fs::read_to_string(&cli.config)
        .with_context(|| format!("cannot read {}", cli.config.display()))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("bad JSON in {}", cli.config.display()))?;
    let mut obj = doc
        .as_object()
        .cloned()
        .context("config must be a JSON object")?;

    // the positional argument selects the experiment; a config that names
    // one itself must agree
    let kind = serde_json::Value::String(cli.experiment.clone());
    if let Some(declared) = obj.get("experiment") {
        if *declared != kind {
            anyhow::bail!(
                "config declares experiment {declared} but the command line asked for \"{}\"",
                cli.experiment
            );
        }
    }
    obj.insert("experiment".into(), kind);
    if let Some(seed) = cli.seed {
        obj.insert("seed".into(), serde_json::json!(seed));
    }

    let cfg: ExperimentConfig =
        serde_json::from_value(serde_json::Value::Object(obj)).context("bad config")?;
    let summary = run_experiment(&cfg, &cli.out)?;
    println!(
        "{}: {}",
        cli.experiment,
        if summary.pass { "PASS" } else { "FAIL" }
    );
    for f in &summary.files {
        println!("  {}", f.display());
    }
    Ok(summary.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
