use std::path::PathBuf;

use anyhow::Result;
use bdeeponet_cli::commands;
use bdeeponet_cli::{resolve_config, Method};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bdeeponet", version, about = "Bayesian DeepONet training with replica-exchange Langevin dynamics")]
struct Cli {
    /// Experiment file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    method: Option<Method>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set epochs=500`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample input functions, solve, and write the noisy dataset.
    Generate,
    /// Train with the configured method and write diagnostics and checkpoints.
    Train,
    /// Build the prediction band for one test trajectory and score the test set.
    Evaluate {
        #[arg(long, default_value_t = 0)]
        trajectory: usize,
    },
    /// Compare per-iteration time of reSGLD and m-reSGLD.
    Bench,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(cli.config.as_deref(), &cli.set, cli.method, cli.seed, cli.out.as_deref())?;
    match cli.command {
        Command::Generate => {
            let r = commands::generate(&cfg)?;
            println!("wrote {}: N={} sigma={} seed={}", r.path.display(), r.n_total, r.noise_sigma, r.seed);
        }
        Command::Train => {
            let r = commands::train(&cfg)?;
            match r.post_burn_in {
                Some((e1, e2)) => println!("{}: post-burn-in e1={e1:.4} e2={e2:.4}", r.method),
                None => println!("{}: no post-burn-in evaluations", r.method),
            }
            if let Some(last) = r.last {
                println!("epoch {}: e1={:.4} e2={:.4}", last.epoch, last.e1, last.e2);
            }
            if let Some(s) = r.mean_iteration_seconds {
                println!("mean iteration {:.3} ms, {} swaps", s * 1e3, r.swap_count);
            }
        }
        Command::Evaluate { trajectory } => {
            let r = commands::evaluate(&cfg, trajectory)?;
            let m = r.selected;
            println!("trajectory {trajectory}: e1={:.4} e2={:.4} e3={:.2}", m.e1, m.e2, m.e3);
            println!(
                "test set: e1={:.4} e2={:.4} e3={:.2} fully covered {}/{} mean width {:.4}",
                r.mean(|m| m.e1),
                r.mean(|m| m.e2),
                r.mean(|m| m.e3),
                r.fully_covered(),
                r.all.len(),
                r.mean(|m| m.band_width)
            );
        }
        Command::Bench => {
            let r = commands::bench(&cfg)?;
            println!("resgld   {:.4} ms/iteration", r.resgld_seconds * 1e3);
            println!("m-resgld {:.4} ms/iteration", r.m_resgld_seconds * 1e3);
            println!("ratio    {:.4}", r.ratio());
        }
    }
    Ok(())
}
