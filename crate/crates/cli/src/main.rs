use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riskcem::ensemble::load_checkpoint;
use riskcem::harness::{run_eval, run_training, sweep, ExperimentConfig};
use riskcem::{Error, Result};

#[derive(Parser)]
#[command(name = "riskcem", version, about = "Risk-averse CEM planning with probabilistic ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Alternate data collection and model fitting.
    Train(Common),
    /// Evaluate a trained (or ground-truth) model over fixed episodes.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to load; defaults to `<output_dir>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train at every point of a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `key=v1,v2,...`; repeat for more axes.
        #[arg(long = "grid", required = true)]
        grid: Vec<String>,
    },
    /// Print the shape of a saved model.
    InspectModel {
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted `key=value` config override; repeatable.
    #[arg(long = "override")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        let config = match &self.config {
            Some(p) => ExperimentConfig::load(p, &overrides)?,
            None => ExperimentConfig::default().with_overrides(&overrides)?,
        };
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&config.output_dir));
        Ok((config, out))
    }
}

fn parse_grid(specs: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    specs
        .iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("grid axis `{s}` is not of the form key=v1,v2")))?;
            Ok((k.trim().to_string(), v.split(',').map(|x| x.trim().to_string()).collect()))
        })
        .collect()
}

fn inspect(path: &Path) -> Result<()> {
    let m = load_checkpoint(path)?;
    let c = m.config();
    println!("state_dim      {}", m.state_dim());
    println!("action_dim     {}", m.action_dim());
    println!("ensemble_size  {}", m.ensemble_size());
    println!("hidden         {} x {}", c.num_layers, c.hidden_size);
    println!("log_var bounds [{}, {}]", c.min_logvar, c.max_logvar);
    println!("parameters     {} per member", m.members()[0].params().len());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(common) => {
            let (config, out) = common.load()?;
            let rec = run_training(&config, &out)?;
            let last = rec.rows.last();
            println!(
                "trained {} episodes into {} (config {}), final coverage {:.4}",
                rec.rows.len(),
                out.display(),
                rec.config_hash,
                last.map_or(0.0, |r| r.coverage)
            );
            Ok(true)
        }
        Command::Eval { common, checkpoint } => {
            let (config, out) = common.load()?;
            let ckpt = checkpoint.unwrap_or_else(|| PathBuf::from(&config.output_dir).join("model.ckpt"));
            let s = run_eval(&config, Some(&ckpt), &out)?;
            println!(
                "success {:.3} ± {:.3}, return {:.3} ± {:.3}, violations {:.3} ± {:.3} over {} episodes",
                s.success_rate, s.success_se, s.mean_return, s.return_se, s.mean_violations, s.violations_se, s.episodes
            );
            Ok(true)
        }
        Command::Sweep { common, grid } => {
            let (config, out) = common.load()?;
            let points = sweep(&config, &parse_grid(&grid)?, &out)?;
            let mut all_ok = true;
            for p in &points {
                match &p.result {
                    Ok(_) => println!("point {:03} [{}] ok", p.index, p.settings.join(" ")),
                    Err(e) => {
                        all_ok = false;
                        eprintln!("point {:03} [{}] failed: {e}", p.index, p.settings.join(" "));
                    }
                }
            }
            Ok(all_ok)
        }
        Command::InspectModel { checkpoint } => inspect(&checkpoint).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
