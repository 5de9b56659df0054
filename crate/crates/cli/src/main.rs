use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use softsnake::algo::Algorithm;
use softsnake_cli::{cmd_collect, cmd_compare, cmd_eval, cmd_simulate, cmd_train, CliResult, RunConfig};

/// Soft snake robot simulator and offline RL pipeline.
#[derive(Debug, Parser)]
#[command(name = "softsnake", version)]
struct Cli {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dot-path override such as `trainer.batch_size=64`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Open-loop gait rollout with fixed biases; writes a COM trajectory CSV.
    Simulate,
    /// Collects the offline dataset with the scripted behavior policy.
    Collect,
    /// Trains one algorithm on the collected dataset.
    Train {
        #[arg(long)]
        algorithm: Option<String>,
        /// Dataset file instead of `<out>/dataset/dataset.bin`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluates a trained checkpoint on every test region.
    Eval {
        #[arg(long)]
        algorithm: Option<String>,
        /// Checkpoint file instead of `<out>/train/<algorithm>/checkpoint.bin`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Tabulates all four algorithms per region.
    Compare,
    /// Prints the effective configuration.
    Config,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        overrides.push(format!("out_dir={}", serde_json::Value::String(out.display().to_string())));
    }
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let algorithm = match &cli.command {
        Command::Train { algorithm, .. } | Command::Eval { algorithm, .. } => algorithm.clone(),
        _ => None,
    };
    if let Some(a) = algorithm {
        let a = Algorithm::parse(&a)?;
        overrides.push(format!("trainer.algorithm={}", a.name()));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;

    match cli.command {
        Command::Simulate => {
            let out = cmd_simulate(&cfg)?;
            let d = out.displacement();
            println!(
                "simulated {} steps; COM displacement ({:.6}, {:.6}) m",
                out.trace.len() - 1,
                d.x,
                d.y
            );
        }
        Command::Collect => {
            let (ds, m) = cmd_collect(&cfg)?;
            println!(
                "collected {} transitions in {} episodes (success fraction {:.3}); dataset sha256 {}",
                ds.len(),
                ds.n_episodes(),
                ds.success_fraction(),
                m.outputs["dataset.bin"]
            );
        }
        Command::Train { dataset, .. } => {
            let s = cmd_train(&cfg, dataset.as_deref())?;
            println!(
                "trained {} -> {}; checkpoint sha256 {}",
                cfg.trainer.algorithm.name(),
                s.checkpoint.display(),
                s.checkpoint_hash
            );
        }
        Command::Eval { checkpoint, .. } => {
            let s = cmd_eval(&cfg, checkpoint.as_deref())?;
            for r in &s.reports {
                let a = &r.aggregates;
                println!(
                    "{} on {}: success {:.3}, avg reward {:.2}, avg steps {:.1}",
                    s.algorithm.name(),
                    r.region,
                    a.success_rate,
                    a.avg_reward,
                    a.avg_steps
                );
            }
        }
        Command::Compare => print!("{}", cmd_compare(&cfg)?.text),
        Command::Config => println!("{}", cfg.effective().to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
