//! `mtcae` command line: data generation, training, evaluation, strategy
//! ablations, gradient checks and model inspection.
//!
//! Run settings come from an optional `key=value` file plus `--key=value`
//! overrides. Exit status is 0 on success, 1 for usage or configuration
//! errors and 2 for numerical failures.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtcae::data::save_dataset;
use mtcae::harness::{
    ablate, peek_checkpoint, resolve_dataset, run_eval, run_gradcheck, run_train, Precision, RunConfig, Split,
    GRADCHECK_TOLERANCE,
};
use mtcae::model::{describe, parameter_count, StrategyKind};
use mtcae::numerics::{BackwardFault, Scalar};
use mtcae::Error;

#[derive(Parser, Debug)]
#[command(name = "mtcae", version, about = "Multi-task cascaded autoencoder for dynamic facial expression recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Settings {
    /// `key=value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides such as `--epochs=10` or `lr=0.003`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Settings {
    fn load(&self) -> mtcae::Result<RunConfig> {
        RunConfig::from_file_and_overrides(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset and write it to a directory.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train one strategy on one fold; streams JSON lines per epoch.
    Train {
        #[command(flatten)]
        settings: Settings,
    },
    /// Evaluate a checkpoint and print a metrics report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory; defaults to the one recorded in the checkpoint.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// train, test or all.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train and evaluate every requested strategy on every fold.
    Ablate {
        #[command(flatten)]
        settings: Settings,
    },
    /// Finite-difference gradient checks of every component.
    Gradcheck {
        /// Corrupt one backward rule: matmul, softmax, layer_norm or gelu.
        #[arg(long)]
        fault: Option<String>,
        /// Check the full model under every strategy, not just the configured one.
        #[arg(long)]
        all_strategies: bool,
        #[command(flatten)]
        settings: Settings,
    },
    /// Print activation and parameter shapes.
    Inspect {
        #[command(flatten)]
        settings: Settings,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> mtcae::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn run(command: Command) -> mtcae::Result<ExitCode> {
    let mut stdout = io::stdout().lock();
    match command {
        Command::GenData { out, settings } => {
            let mut cfg = settings.load()?;
            cfg.dataset = None;
            let dataset = resolve_dataset(&cfg)?;
            save_dataset(&dataset, &out)?;
            let summary = serde_json::json!({
                "dir": out.display().to_string(),
                "samples": dataset.samples.len(),
                "subjects": dataset.spec.num_subjects,
                "classes": dataset.spec.num_classes,
                "seed": dataset.spec.seed,
            });
            writeln!(stdout, "{summary}").map_err(io_err(Path::new("<stdout>")))?;
        }
        Command::Train { settings } => {
            let cfg = settings.load()?;
            match cfg.train.precision {
                Precision::F32 => train_with::<f32>(&cfg, &mut stdout)?,
                Precision::F64 => train_with::<f64>(&cfg, &mut stdout)?,
            }
        }
        Command::Eval {
            checkpoint,
            dataset,
            split,
        } => {
            let split: Split = split.parse()?;
            let (_, precision) = peek_checkpoint(&checkpoint)?;
            let report = match precision {
                Precision::F32 => run_eval::<f32>(&checkpoint, dataset, split)?,
                Precision::F64 => run_eval::<f64>(&checkpoint, dataset, split)?,
            };
            writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?).map_err(io_err(Path::new("<stdout>")))?;
        }
        Command::Ablate { settings } => {
            let cfg = settings.load()?;
            match cfg.train.precision {
                Precision::F32 => ablate_with::<f32>(&cfg, &mut stdout)?,
                Precision::F64 => ablate_with::<f64>(&cfg, &mut stdout)?,
            }
        }
        Command::Gradcheck {
            fault,
            all_strategies,
            settings,
        } => {
            let cfg = settings.load()?;
            let fault: Option<BackwardFault> = fault.map(|f| f.parse()).transpose()?;
            let strategies = if all_strategies {
                StrategyKind::ALL.to_vec()
            } else {
                vec![cfg.model.strategy]
            };
            let checks = run_gradcheck(&cfg.model, &strategies, fault, cfg.model.seed)?;
            for c in &checks {
                writeln!(
                    stdout,
                    "{:<24} max_rel_error={:.3e} coords={:<6} {}",
                    c.component,
                    c.max_rel_error,
                    c.coordinates,
                    if c.passed { "ok" } else { "FAIL" }
                )
                .map_err(io_err(Path::new("<stdout>")))?;
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.component.as_str()).collect();
            if !failed.is_empty() {
                return Err(Error::GradCheck(format!(
                    "{} exceeded {GRADCHECK_TOLERANCE:e}",
                    failed.join(", ")
                )));
            }
        }
        Command::Inspect { settings } => {
            let cfg = settings.load()?;
            write!(stdout, "{}", describe(&cfg.model)?).map_err(io_err(Path::new("<stdout>")))?;
            writeln!(stdout, "total parameters: {}", parameter_count(&cfg.model)?)
                .map_err(io_err(Path::new("<stdout>")))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn train_with<T: Scalar>(cfg: &RunConfig, out: &mut dyn Write) -> mtcae::Result<()> {
    let outcome = run_train::<T>(cfg, out)?;
    eprintln!(
        "trained {} epochs ({} steps); checkpoint in {}",
        outcome.checkpoint.epoch,
        outcome.checkpoint.step,
        cfg.out_dir.display()
    );
    Ok(())
}

fn ablate_with<T: Scalar>(cfg: &RunConfig, out: &mut dyn Write) -> mtcae::Result<()> {
    let dataset = resolve_dataset(cfg)?;
    let report = ablate::<T>(cfg, &dataset, &cfg.strategies, &mut |fold| {
        if let Ok(line) = serde_json::to_string(fold) {
            eprintln!("{line}");
        }
    })?;
    write_file(&cfg.out_dir.join("ablation.json"), &serde_json::to_string_pretty(&report)?)?;
    write_file(&cfg.out_dir.join("ablation.md"), &report.table())?;
    write!(out, "{}", report.table()).map_err(io_err(Path::new("<stdout>")))?;
    if let Some(margin) = report.mtl_margin() {
        writeln!(out, "best multi-task WAR minus single-task WAR: {:+.2} points", 100.0 * margin)
            .map_err(io_err(Path::new("<stdout>")))?;
    }
    Ok(())
}
