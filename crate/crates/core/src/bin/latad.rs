use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use latad::config::ExperimentConfig;
use latad::evaluation::EvalReport;
use latad::runner::{self, RunDir};

#[derive(Parser)]
#[command(name = "latad", version, about = "Multivariate time-series anomaly detection")]
struct Cli {
    /// TOML config; defaults apply to every omitted key.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.max_epoch=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Run directory; overrides `output_dir`.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load, clean, normalize and split the dataset.
    Preprocess,
    /// Train the extractor and generators.
    Train,
    /// Fit the reference model and score validation and test splits.
    Score,
    /// Compute F1, F1_PA50 and F1_PA and render plots.
    Evaluate,
    /// Rank root-cause features of one test window.
    Diagnose {
        /// `highest-score` or a test timestamp.
        #[arg(long)]
        window: Option<String>,
    },
    /// Write the synthetic dataset as CSV.
    Synth,
    /// Print the resolved configuration.
    PrintConfig,
}

fn load_config(cli: &Cli) -> latad::Result<ExperimentConfig> {
    let base = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default().resolved(),
    };
    let mut cfg = base.with_overrides(&cli.overrides)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> latad::Result<()> {
    let cfg = load_config(cli)?;
    let dir = RunDir::new(&cfg.output_dir);
    match &cli.command {
        Cmd::PrintConfig => print!("{}", cfg.to_toml()),
        Cmd::Preprocess => {
            let pre = runner::cmd_preprocess(&cfg, &dir)?;
            println!(
                "train {} / validation {} / test {} rows, {} features -> {}",
                pre.train.len(),
                pre.validation.len(),
                pre.test.len(),
                pre.train.num_features(),
                dir.root.display()
            );
        }
        Cmd::Train => {
            let history = runner::cmd_train(&cfg, &dir)?;
            if let Some(last) = history.last() {
                println!("epoch {}: total loss {:.6}", last.epoch, last.total);
            }
            println!("checkpoint -> {}", dir.checkpoint().display());
        }
        Cmd::Score => {
            let scored = runner::cmd_score(&cfg, &dir)?;
            println!(
                "{} test scores, threshold {:.6} -> {}",
                scored.test_scores.len(),
                scored.threshold,
                dir.scores().display()
            );
        }
        Cmd::Evaluate => match runner::cmd_evaluate(&cfg, &dir)? {
            Some(report) => {
                println!("{}", EvalReport::table_header());
                println!("{}", report.evaluation.table_row(&report.dataset));
            }
            None => println!("no labels; scores and plots written to {}", dir.root.display()),
        },
        Cmd::Diagnose { window } => {
            let report = runner::cmd_diagnose(&cfg, &dir, window.as_deref())?;
            print!("{}", report.render());
        }
        Cmd::Synth => {
            let (a, b) = runner::cmd_synth(&cfg, &cfg.output_dir)?;
            println!("{}\n{}", a.display(), b.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli).context("latad failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<latad::Error>()
                .map_or(1, runner::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
