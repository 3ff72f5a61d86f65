//! `spacefill`: train generators, evaluate checkpoints, run the constructive
//! oracle, sweep and reproduce presets, and render plots.
//!
//! Exit status: 0 on success, 1 for invalid input, 2 for runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::{json, Value};

use spacefill_core::experiments::{self, PipelineConfig, PlotOptions, SweepSpec};
use spacefill_core::rng::{self, streams};
use spacefill_core::trainer::{self, ConfigEcho, TargetSource};
use spacefill_core::{Error, ManifoldSpec, MlpParams, Result};

#[derive(Debug, Parser)]
#[command(name = "spacefill", version, about = "Wasserstein-trained ReLU generators and space-filling oracles")]
struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a generator from a JSON config and write the run directory.
    ///
    /// The config is either {"arch": {...}, "train": {...}} or
    /// {"preset": "<name>", "scale": <f>, ...overrides}.
    Train {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint against a target and print the metrics as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Target distribution (a manifold spec, sampled with `--n` points)
        /// or target source (grid, sample or points), as JSON or a JSON file.
        #[arg(long)]
        target: String,
        /// Number of generated points.
        #[arg(long)]
        n: usize,
        /// Input distribution; defaults to the uniform cube of the network's
        /// input dimension.
        #[arg(long)]
        input: Option<String>,
    },
    /// Run the constructive pipeline: curve, reparameterization, network fit
    /// and the chained-bound decomposition.
    Spacefill {
        /// Manifold spec as JSON or a JSON file.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        spacing: f64,
        #[arg(long)]
        out: PathBuf,
        /// Target sample size.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run a sweep described by a JSON spec.
    Sweep {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a registered preset and write its run directory and plots.
    Reproduce {
        preset: String,
        /// Divide iterations and target sizes by this factor.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
        /// Overrides as JSON or a JSON file; flags take precedence.
        #[arg(long)]
        config: Option<String>,
    },
    /// Render the SVG plots of a run directory.
    Plot {
        run_dir: PathBuf,
        /// Logarithmic loss axis.
        #[arg(long)]
        log: bool,
    },
}

fn preset_help() -> String {
    let mut text = String::from("Presets:\n");
    for p in experiments::presets() {
        text.push_str(&format!("  {:<20} {}\n", p.name, p.description));
    }
    text
}

fn cli_command() -> clap::Command {
    let help = preset_help();
    Cli::command()
        .after_help(help.clone())
        .mut_subcommand("reproduce", |c| c.after_help(help))
}

/// Reads `arg` as a JSON file if such a file exists, else as inline JSON.
fn json_arg(arg: &str, what: &str) -> Result<Value> {
    let path = Path::new(arg);
    let (text, context) = if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            context: what.to_string(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        (text, format!("{what} ({})", path.display()))
    } else if arg.trim_start().starts_with(['{', '[']) {
        (arg.to_string(), what.to_string())
    } else {
        return Err(Error::Parse {
            context: what.to_string(),
            message: format!("`{arg}` is neither an existing file nor inline JSON"),
        });
    };
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        context,
        message: e.to_string(),
    })
}

fn from_value<T: serde::de::DeserializeOwned>(value: Value, what: &str) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Parse {
        context: what.to_string(),
        message: e.to_string(),
    })
}

fn seed_patch(seed: Option<u64>) -> Value {
    seed.map_or(Value::Null, |s| json!({ "seed": s }))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn train(config: &str, out: &Path, seed: Option<u64>) -> Result<()> {
    let value = json_arg(config, "train config")?;
    let (arch, cfg) = match value {
        Value::Object(mut map) if map.contains_key("preset") => {
            let name: String = from_value(map.remove("preset").unwrap(), "preset")?;
            let scale: f64 = match map.remove("scale") {
                Some(v) => from_value(v, "scale")?,
                None => 1.0,
            };
            experiments::resolve(&name, scale, &[Value::Object(map), seed_patch(seed)])?
        }
        other => {
            let echo: ConfigEcho = from_value(other, "train config")?;
            experiments::apply_overrides(&echo.arch, &echo.train, &seed_patch(seed))?
        }
    };
    let record = experiments::run_config(&arch, &cfg, out)?;
    print_json(&json!({
        "out": out.display().to_string(),
        "iterations": record.losses.len(),
        "final_loss": record.final_loss(),
        "final_metrics": record.final_metrics(),
    }))
}

fn target_arg(value: Value, n: usize, seed: u64) -> Result<TargetSource> {
    if value.get("kind").is_some() {
        return from_value(value, "target");
    }
    let spec: ManifoldSpec = from_value(value, "target")?;
    Ok(TargetSource::Sample { spec, n, seed })
}

fn eval(checkpoint: &Path, target: &str, n: usize, input: Option<&str>, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(0);
    let text = std::fs::read_to_string(checkpoint).map_err(|e| Error::Parse {
        context: "checkpoint".into(),
        message: format!("cannot read {}: {e}", checkpoint.display()),
    })?;
    let params = MlpParams::from_json(&text)?;
    let source = target_arg(json_arg(target, "target")?, n, rng::derive_seed(seed, streams::TARGET))?;
    let arch = params.arch();
    if arch.output_dim != source.dim() {
        return Err(Error::Shape(format!(
            "checkpoint output dimension {} does not match target dimension {}",
            arch.output_dim,
            source.dim()
        )));
    }
    let input_spec = match input {
        Some(s) => from_value(json_arg(s, "input")?, "input")?,
        None => ManifoldSpec::hypercube(arch.input_dim),
    };
    if n == 0 {
        return Err(Error::Parameter("--n must be positive".into()));
    }
    let measure = source.measure()?;
    let metrics = trainer::evaluate(&params, &input_spec, &measure, n, seed)?;
    print_json(&metrics)
}

fn spacefill(spec: &str, spacing: f64, out: &Path, n: Option<usize>, seed: Option<u64>) -> Result<()> {
    let spec: ManifoldSpec = from_value(json_arg(spec, "spec")?, "spec")?;
    let mut cfg = PipelineConfig::new(spec, spacing, seed.unwrap_or(0));
    if let Some(n) = n {
        cfg.n = n;
    }
    let report = experiments::run_pipeline(&cfg, Some(out))?;
    print_json(&report)
}

fn sweep(spec: &str, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec: SweepSpec = from_value(json_arg(spec, "sweep spec")?, "sweep spec")?;
    if let Some(s) = seed {
        spec.seeds = (0..spec.replicates as u64).map(|r| rng::derive_seed(s, r)).collect();
    }
    let summary = experiments::run_sweep(&spec, out)?;
    for row in summary.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("cell {} failed: {}", row.cell, row.error.as_deref().unwrap_or(""));
    }
    print_json(&json!({
        "out": out.display().to_string(),
        "cells": summary.rows.len(),
        "failed": summary.rows.iter().filter(|r| r.error.is_some()).count(),
        "loss_ordering": summary.loss_ordering,
        "slope": summary.slope,
    }))
}

fn reproduce(name: &str, scale: f64, out: &Path, config: Option<&str>, seed: Option<u64>) -> Result<()> {
    let file = match config {
        Some(c) => json_arg(c, "overrides")?,
        None => Value::Null,
    };
    let (arch, cfg) = experiments::resolve(name, scale, &[file, seed_patch(seed)])?;
    let record = experiments::run_config(&arch, &cfg, out)?;
    let thresholds = experiments::preset(name)?.thresholds;
    let metrics = record.final_metrics();
    print_json(&json!({
        "preset": name,
        "out": out.display().to_string(),
        "final_loss": record.final_loss(),
        "final_metrics": metrics,
        "thresholds": thresholds,
        "passes": metrics.map(|m| thresholds.passes(m.w1, m.fill_mean)),
    }))
}

fn plot(run_dir: &Path, log: bool) -> Result<()> {
    let report = experiments::emit_plots_with(run_dir, &PlotOptions { log_loss: log })?;
    for notice in &report.notices {
        eprintln!("notice: {notice}");
    }
    for path in &report.written {
        println!("{}", path.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Train { config, out } => train(&config, &out, seed),
        Command::Eval {
            checkpoint,
            target,
            n,
            input,
        } => eval(&checkpoint, &target, n, input.as_deref(), seed),
        Command::Spacefill { spec, spacing, out, n } => spacefill(&spec, spacing, &out, n, seed),
        Command::Sweep { spec, out } => sweep(&spec, &out, seed),
        Command::Reproduce {
            preset,
            scale,
            out,
            config,
        } => reproduce(&preset, scale, &out, config.as_deref(), seed),
        Command::Plot { run_dir, log } => plot(&run_dir, log),
    }
}

fn main() -> ExitCode {
    let matches = match cli_command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    // Usage errors, including a missing verb, go to stderr.
                    eprint!("{}", e.render());
                    eprintln!("\n{}", cli_command().render_usage());
                    ExitCode::from(1)
                }
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
