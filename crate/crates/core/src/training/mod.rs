//! Stochastic-gradient training of the proposal with periodic re-learning of
//! the rejection-control constants.

mod gradient;
mod tune;

pub use gradient::{
    pathwise_gradient_of_system, reparam_gradient_of_system, replay_bound_reparam, GradEstimate,
    GradientMode,
};
pub use tune::{f_samples, learn_m_per_particle, learn_m_shared, learn_schedule, nearest_rank_quantile};

pub use crate::schedule::{MMode, MSchedule};

use serde::{Deserialize, Serialize};

use crate::bounds::{
    report_from_system, run_smc, vrpf_estimate, BoundReport, Estimator, ParticleSystem, ReportConfig,
    Resampling, SmcOptions,
};
use crate::error::{Error, Result};
use crate::lgssm::{Dataset, LgssmParams};
use crate::proposal::ProposalParams;
use crate::rng::{self, StreamFamily};

/// Runs the rejection-controlled filter and differentiates its bound with
/// accepted particles held fixed.
#[allow(clippy::too_many_arguments)]
pub fn pathwise_gradient(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    n: usize,
    k: usize,
    schedule: &MSchedule,
    streams: &mut StreamFamily,
) -> Result<(GradEstimate, BoundReport, ParticleSystem)> {
    let (report, system) = vrpf_estimate(model, phi, data, n, k, schedule, None, streams)?;
    let grad = pathwise_gradient_of_system(model, phi, data, &system);
    Ok((grad, report, system))
}

/// Runs the filter without rejection control and returns the reparameterized
/// gradient of its bound.
pub fn reparam_gradient(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    n: usize,
    resampling: Resampling,
    streams: &mut StreamFamily,
) -> Result<(GradEstimate, BoundReport, ParticleSystem)> {
    let (report, system) =
        crate::bounds::fivo_estimate_with_system(model, phi, data, n, resampling, streams)?;
    let grad = reparam_gradient_of_system(model, phi, data, &system)?;
    Ok((grad, report, system))
}

/// Central differences of `f` around `x` with step `h`. `f` is evaluated
/// twice at `x` first; differing values mean the evaluator is not
/// replayable and the oracle refuses to run.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let f0 = f(x);
    let f1 = f(x);
    if f0.to_bits() != f1.to_bits() {
        return Err(Error::OracleIntegrity(format!(
            "evaluator returned {f0} and {f1} at identical parameters"
        )));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient ascent with a constant step.
    Sga,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sga" | "sgd" => Ok(Self::Sga),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n: usize,
    pub k: usize,
    /// Target quantile for learning `M`; `None` trains without rejection
    /// control.
    pub gamma: Option<f64>,
    pub j: usize,
    /// Epochs between `M` refreshes; `0` never refreshes.
    pub f_update: usize,
    pub m_mode: MMode,
    /// Resampling policy for runs without rejection control.
    pub resampling: Resampling,
    pub gradient: GradientMode,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n: 4,
            k: 3,
            gamma: Some(0.4),
            j: 64,
            f_update: 10,
            m_mode: MMode::PerParticle,
            resampling: Resampling::EveryStep,
            gradient: GradientMode::FixedParticles,
            optimizer: OptimizerKind::Sga,
            lr: 1e-3,
            epochs: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.j == 0 {
            return Err(Error::Config("N, K and J must be at least 1".into()));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("gamma must lie in [0, 1], got {g}")));
            }
            if self.gradient == GradientMode::Reparameterized {
                return Err(Error::Config(
                    "reparameterized gradients need training without rejection control".into(),
                ));
            }
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub bound: f64,
    pub grad_norm: f64,
    pub acceptance_rate: f64,
    pub m_refreshed: bool,
    pub lr: f64,
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub aborted: Option<String>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        use crate::experiment::fmt_f64;
        let d = self.rows.first().map_or(0, |r| r.mu.len());
        let mut out = String::from("epoch,bound,grad_norm,acceptance_rate,m_refreshed,lr");
        for j in 0..d {
            out.push_str(&format!(",mu_{j}"));
        }
        for j in 0..d {
            out.push_str(&format!(",log_var_{j}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                r.epoch,
                fmt_f64(r.bound),
                fmt_f64(r.grad_norm),
                fmt_f64(r.acceptance_rate),
                r.m_refreshed as u8,
                fmt_f64(r.lr)
            ));
            for v in r.mu.iter().chain(&r.log_var) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        if let Some(reason) = &self.aborted {
            out.push_str(&format!("# aborted: {reason}\n"));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub phi: ProposalParams,
    pub schedule: MSchedule,
    pub trace: TrainTrace,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(d: usize) -> Self {
        Self {
            m: vec![0.0; d],
            v: vec![0.0; d],
            step: 0,
        }
    }

    fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        g.iter()
            .enumerate()
            .map(|(j, &gj)| {
                self.m[j] = Self::BETA1 * self.m[j] + (1.0 - Self::BETA1) * gj;
                self.v[j] = Self::BETA2 * self.v[j] + (1.0 - Self::BETA2) * gj * gj;
                (self.m[j] / c1) / ((self.v[j] / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

/// One stochastic gradient of the configured objective.
fn epoch_gradient(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    cfg: &TrainConfig,
    schedule: &MSchedule,
    streams: &mut StreamFamily,
) -> Result<(GradEstimate, BoundReport, ParticleSystem)> {
    match (cfg.gamma, cfg.gradient) {
        (Some(_), _) => pathwise_gradient(model, phi, data, cfg.n, cfg.k, schedule, streams),
        (None, GradientMode::Reparameterized) => {
            reparam_gradient(model, phi, data, cfg.n, cfg.resampling, streams)
        }
        (None, GradientMode::FixedParticles) => {
            let opts = SmcOptions::new(cfg.n, 1, cfg.resampling);
            let system = run_smc(model, phi, data, &opts, &MSchedule::zero(), streams)?;
            let grad = pathwise_gradient_of_system(model, phi, data, &system);
            let config = ReportConfig {
                estimator: Estimator::Fivo,
                n: cfg.n,
                k: 1,
                gamma: None,
                m_mode: MMode::Constant,
                resampling: cfg.resampling,
                seed: streams.seed(),
            };
            Ok((grad, report_from_system(&system, config, 0.0), system))
        }
    }
}

/// Gradient ascent on the bound. `M` starts at zero everywhere and, when a
/// target quantile is configured, is re-learned every `f_update` epochs at
/// the current parameters. Errors during an epoch stop training and are
/// recorded in the trace; the last good parameters are returned.
pub fn optimize(
    model: &LgssmParams,
    data: &Dataset,
    init: &ProposalParams,
    cfg: &TrainConfig,
    streams: &mut StreamFamily,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if init.dim() != model.d_z() {
        return Err(Error::Config("initial proposal dimension does not match the model".into()));
    }
    let mut phi = init.clone();
    let mut schedule = MSchedule::zero();
    let mut trace = TrainTrace::default();
    let mut adam = Adam::new(2 * phi.dim());

    for epoch in 0..cfg.epochs {
        let (grad, report, system) = match epoch_gradient(model, &phi, data, cfg, &schedule, streams) {
            Ok(v) => v,
            Err(e) => {
                trace.aborted = Some(format!("epoch {epoch}: {e}"));
                break;
            }
        };
        if !grad.is_finite() {
            trace.aborted = Some(Error::NonFiniteGradient { epoch }.to_string());
            break;
        }
        let g = grad.to_vec();
        let dir = match cfg.optimizer {
            OptimizerKind::Sga => g.clone(),
            OptimizerKind::Adam => adam.direction(&g),
        };
        let next: Vec<f64> = phi.to_vec().iter().zip(&dir).map(|(p, d)| p + cfg.lr * d).collect();
        match ProposalParams::from_slice(&next) {
            Ok(p) => phi = p,
            Err(e) => {
                trace.aborted = Some(format!("epoch {epoch}: {e}"));
                break;
            }
        }

        let mut refreshed = false;
        if let Some(gamma) = cfg.gamma {
            if cfg.f_update > 0 && (epoch + 1) % cfg.f_update == 0 {
                let tune = streams.get_mut(rng::M_TUNE)?;
                schedule = learn_schedule(model, &phi, data, &system, gamma, cfg.j, cfg.m_mode, tune)?;
                refreshed = true;
            }
        }

        trace.rows.push(TraceRow {
            epoch,
            bound: report.bound,
            grad_norm: grad.norm(),
            acceptance_rate: report.acceptance_rate,
            m_refreshed: refreshed,
            lr: cfg.lr,
            mu: phi.mu.clone(),
            log_var: phi.log_var.clone(),
        });
    }

    Ok(TrainOutcome {
        phi,
        schedule,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_on_simple_functions() {
        let g = finite_difference_gradient(|x| x.iter().sum(), &[0.3, -2.0, 5.0], 1e-4).unwrap();
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-10), "{g:?}");
        let g = finite_difference_gradient(|x| x[0] * x[0] + 3.0 * x[1] * x[1], &[1.0, -0.5], 1e-4).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] + 3.0).abs() < 1e-8, "{g:?}");
    }

    #[test]
    fn fd_rejects_unreplayable_evaluator() {
        let mut calls = 0.0;
        let err = finite_difference_gradient(
            |_| {
                calls += 1.0;
                calls
            },
            &[0.0],
            1e-4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::OracleIntegrity(_)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.gradient = GradientMode::Reparameterized;
        assert!(cfg.validate().is_err());
        cfg.gamma = None;
        assert!(cfg.validate().is_ok());
        cfg.lr = 0.0;
        assert!(cfg.validate().is_err());
    }
}
