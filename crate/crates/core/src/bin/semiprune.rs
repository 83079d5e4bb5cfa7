use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use semiprune::config::PipelineConfig;
use semiprune::pipeline;
use semiprune::{Error, Result};

#[derive(Parser)]
#[command(name = "semiprune", version, about = "Label-efficient dataset pruning on synthetic tasks")]
struct Cli {
    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $SEMIPRUNE_OUT, then ./semiprune-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pruning ratio; a comma-separated list for `compare`.
    #[arg(long, global = true)]
    ratio: Option<String>,
    /// Selector (beta, double_end, top_k, bottom_k, random); for `compare`
    /// a list of strategies such as `dual_beta,aum_cutoff,random`.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Score metric: dual, aum, forgetting or el2n.
    #[arg(long, global = true)]
    metric: Option<String>,
    /// Labeled budget fraction.
    #[arg(long, global = true)]
    budget: Option<String>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Generate the synthetic task.
    Gen,
    /// Draw the labeled budget and pseudo-label the training split.
    Label,
    /// Train on the pool and log per-epoch predictions.
    Trainlog,
    /// Search selection hyperparameters on a held-out part of the pool.
    Tune,
    /// Compute per-example scores.
    Score,
    /// Select a coreset from the scores.
    Select,
    /// Retrain on the coreset and report test accuracy.
    Eval,
    /// All stages in order.
    Run,
    /// Multi-seed comparison of strategies and ratios.
    Compare,
    /// Print the effective configuration.
    Config,
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let compare = cli.command == Command::Compare;
    let mut overrides: Vec<(String, String)> = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(s) = cli.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(r) = &cli.ratio {
        overrides.push((if compare { "compare.ratios" } else { "selection.ratio" }.into(), r.clone()));
    }
    if let Some(m) = &cli.method {
        overrides.push((if compare { "compare.methods" } else { "selection.method" }.into(), m.clone()));
    }
    if let Some(m) = &cli.metric {
        overrides.push(("score.metric".into(), m.clone()));
    }
    if let Some(b) = &cli.budget {
        overrides.push(("budget.fraction".into(), b.clone()));
    }
    // A preset override must land before the task keys it resets.
    overrides.sort_by_key(|(k, _)| k != "task.preset");
    for (k, v) in &overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    let out = pipeline::resolve_out(cli.out.as_deref());
    let line = match cli.command {
        Command::Gen => pipeline::cmd_gen(&cfg, &out)?,
        Command::Label => pipeline::cmd_label(&cfg, &out)?,
        Command::Trainlog => pipeline::cmd_trainlog(&cfg, &out)?,
        Command::Tune => pipeline::cmd_tune(&cfg, &out)?,
        Command::Score => pipeline::cmd_score(&cfg, &out)?,
        Command::Select => pipeline::cmd_select(&cfg, &out)?,
        Command::Eval => pipeline::cmd_eval(&cfg, &out)?,
        Command::Run => pipeline::cmd_run(&cfg, &out)?.join("\n"),
        Command::Compare => {
            let report = pipeline::cmd_compare(&cfg, &out)?;
            format!("compare: {} cells written to {}", report.rows.len(), out.join("report.csv").display())
        }
        Command::Config => cfg.to_text().trim_end().to_string(),
    };
    println!("{line}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("semiprune: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
