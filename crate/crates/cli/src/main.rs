use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use log::{error, info};

use infoqgan::config::RunConfig;
use infoqgan::run::{self, SweepArgs};

#[derive(Parser)]
#[command(name = "infoqgan", version, about = "Train and evaluate InfoQGAN and QGAN generators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; unspecified keys take the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra setting as KEY=VALUE, e.g. `eval.samples=500`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut ov = self.overrides.clone();
        if let Some(s) = self.seed {
            ov.push(format!("seed={s}"));
        }
        if let Some(o) = &self.out {
            ov.push(format!("out_dir={:?}", o.display().to_string()));
        }
        RunConfig::load(self.config.as_deref(), &ov)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator and write checkpoints, samples and metrics.
    Train(Common),
    /// Sweep one latent entry of a checkpointed generator.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Latent entry to sweep; defaults to the last one.
        #[arg(long)]
        code_index: Option<usize>,
        #[arg(long, default_value_t = 16)]
        segments: usize,
        #[arg(long, default_value_t = 512)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Two-dimensional KS test of a samples file against a target.
    Eval {
        #[arg(long)]
        samples: PathBuf,
        /// Target points; generated from the configuration when absent.
        #[arg(long)]
        target: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write the experiment's input data without training.
    GenData(Common),
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let outcome = run::train(&cfg)?;
            if let Some(ks) = outcome.ks {
                info!("KS D = {:.4}, p = {:.4}, pass = {}", ks.statistic, ks.p_value, ks.pass);
            }
            info!("wrote {}", cfg.out_dir.display());
        }
        Command::Sweep {
            checkpoint,
            code_index,
            segments,
            draws,
            seed,
            out,
        } => {
            let segs = run::sweep(&SweepArgs {
                checkpoint,
                code_index,
                segments,
                draws,
                seed,
                out: out.clone(),
            })?;
            info!("swept {} segments into {}", segs.len(), out.display());
        }
        Command::Eval { samples, target, common } => {
            let cfg = common.resolve()?;
            let ks = run::eval_files(&samples, target.as_deref(), &cfg, &cfg.out_dir)?;
            println!("D = {} p = {} pass = {}", ks.statistic, ks.p_value, ks.pass);
        }
        Command::GenData(c) => {
            let cfg = c.resolve()?;
            for p in run::gen_data(&cfg)? {
                info!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
