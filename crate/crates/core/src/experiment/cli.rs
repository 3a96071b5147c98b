//! Command-line interface shared by the `vrpf` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::{cmd_compare, cmd_estimate, cmd_simulate, cmd_train, ExperimentConfig};
use crate::bounds::{Estimator, Resampling};
use crate::error::Result;
use crate::lgssm::EmissionKind;
use crate::proposal::ProposalParams;
use crate::schedule::MMode;
use crate::training::{GradientMode, OptimizerKind};

#[derive(Debug, Parser)]
#[command(name = "vrpf", version, about = "Rejection-controlled particle filter bounds on linear Gaussian state-space models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and write dataset.csv and dataset.json.
    Simulate(Common),
    /// Replicated bound estimates with mean, standard error and the exact value.
    Estimate(Common),
    /// Train the proposal by stochastic gradient ascent on the bound.
    Train(Common),
    /// Train and evaluate the rejection-controlled filter against plain filters.
    Compare(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c) | Command::Estimate(c) | Command::Train(c) | Command::Compare(c) => c,
        }
    }
}

/// Options accepted by every subcommand. Flags override the config file.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub reps: Option<usize>,

    #[arg(long)]
    pub d_z: Option<usize>,
    #[arg(long)]
    pub d_x: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// sparse or dense.
    #[arg(long)]
    pub emission: Option<EmissionKind>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Directory with dataset.csv and dataset.json to use instead of simulating.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// vrpf, fivo, iwae or elbo.
    #[arg(long)]
    pub estimator: Option<Estimator>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Target quantile for learning M.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Constant M used when no quantile is given.
    #[arg(long)]
    pub m: Option<f64>,
    /// per-particle, shared-per-time or constant.
    #[arg(long)]
    pub m_mode: Option<MMode>,
    /// Proposal draws per quantile estimate.
    #[arg(long)]
    pub j: Option<usize>,
    /// never, every-step, ess or ess:<threshold>.
    #[arg(long)]
    pub resampling: Option<Resampling>,

    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs between re-learning M (0: never).
    #[arg(long)]
    pub f_update: Option<usize>,
    /// sga or adam.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    /// Gradient for runs without rejection control: reparameterized or fixed-particles.
    #[arg(long)]
    pub baseline_gradient: Option<GradientMode>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// JSON file with initial proposal parameters.
    #[arg(long)]
    pub phi: Option<PathBuf>,

    /// Comma-separated target quantiles for compare.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub eval_reps: Option<usize>,
}

impl Common {
    /// Loads the config file (or defaults) and applies every flag given.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag { cfg.$($field).+ = v.clone(); })*
            };
        }
        set!(
            seed => seed,
            out => out,
            reps => reps,
            d_z => model.d_z,
            d_x => model.d_x,
            alpha => model.alpha,
            emission => model.emission,
            steps => data.steps,
            estimator => estimator.kind,
            n => estimator.n,
            k => estimator.k,
            m => estimator.m,
            m_mode => estimator.m_mode,
            j => estimator.j,
            resampling => estimator.resampling,
            epochs => training.epochs,
            lr => training.lr,
            f_update => training.f_update,
            optimizer => training.optimizer,
            baseline_gradient => training.baseline_gradient,
            checkpoint_every => training.checkpoint_every,
            gammas => compare.gammas,
            seeds => compare.seeds,
            eval_reps => compare.eval_reps,
        );
        if let Some(g) = self.gamma {
            cfg.estimator.gamma = Some(g);
        }
        if let Some(dir) = &self.data {
            cfg.data.path = Some(dir.clone());
        }
        if let Some(path) = &self.phi {
            let text = std::fs::read_to_string(path).map_err(|e| crate::error::Error::io(path, e))?;
            cfg.training.init = Some(serde_json::from_str::<ProposalParams>(&text)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses arguments, runs the command and prints a short summary. Returns
/// the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            1
        }
    }
}

fn run(command: &Command) -> Result<String> {
    let cfg = command.common().resolve()?;
    let out = cfg.out.display().to_string();
    Ok(match command {
        Command::Simulate(_) => {
            let meta = cmd_simulate(&cfg)?;
            format!(
                "simulated {} steps (d_z={}, d_x={}); exact log-marginal {:.6}; wrote {out}",
                meta.steps, meta.d_z, meta.d_x, meta.kalman_log_marginal
            )
        }
        Command::Estimate(_) => {
            let s = cmd_estimate(&cfg)?;
            format!(
                "{}\n{}\nwrote {out}",
                super::EstimateSummary::csv_header(),
                s.csv_row()
            )
        }
        Command::Train(_) => {
            let o = cmd_train(&cfg)?;
            let last = o.trace.rows.last().map_or(f64::NAN, |r| r.bound);
            let mut msg = format!("trained {} epochs; last bound {last:.6}; wrote {out}", o.trace.rows.len());
            if let Some(reason) = &o.trace.aborted {
                msg.push_str(&format!("\nstopped early: {reason}"));
            }
            msg
        }
        Command::Compare(_) => cmd_compare(&cfg)?.to_csv(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "vrpf", "estimate", "--seed", "9", "--n", "8", "--gamma", "0.4", "--resampling", "ess:0.5",
            "--m-mode", "shared", "--gammas", "0.3,0.6",
        ])
        .unwrap();
        let cfg = cli.command.common().resolve().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.estimator.n, 8);
        assert_eq!(cfg.estimator.gamma, Some(0.4));
        assert_eq!(cfg.estimator.resampling, Resampling::EssBelow(0.5));
        assert_eq!(cfg.estimator.m_mode, MMode::SharedPerTime);
        assert_eq!(cfg.compare.gammas, vec![0.3, 0.6]);
    }

    #[test]
    fn invalid_values_fail() {
        let cli = Cli::try_parse_from(["vrpf", "estimate", "--gamma", "1.5"]).unwrap();
        assert!(cli.command.common().resolve().is_err());
        assert!(Cli::try_parse_from(["vrpf", "estimate", "--estimator", "nope"]).is_err());
    }
}
