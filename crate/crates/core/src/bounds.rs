//! Bound estimators sharing one SMC skeleton.
//!
//! The skeleton proposes every particle through partial rejection control,
//! accumulates log weights since the last resampling event and resamples
//! according to a policy. The estimators differ only in configuration:
//!
//! | estimator | rejection control | resampling               |
//! |-----------|-------------------|--------------------------|
//! | VRPF      | `M` schedule      | Bernoulli race, each step |
//! | FIVO      | `M = 0`           | every step or ESS < tau N |
//! | IWAE      | `M = 0`           | never                    |
//! | ELBO      | `M = 0`           | never, `N = 1`           |
//!
//! With `M = 0` the rejection step accepts the first proposal without
//! drawing a uniform, the weight estimate needs no fresh draws and every race
//! coin is certain, so VRPF at `M = 0` and FIVO produce the same bits.
//!
//! The estimate of `log p(x_{1:T})` is accumulated at resampling events (and
//! at the final step) as `log mean_i exp(log w_i)`, where `log w_i` is the
//! weight accumulated since the previous event. Steps without an event
//! contribute `0`. No resampling is performed after the final step.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lgssm::{Dataset, LgssmParams};
use crate::math::{log_mean_exp, log_sum_exp, softmax};
use crate::prc::{prc_step, PrcSite, DEFAULT_TRIAL_CAP};
use crate::proposal::ProposalParams;
use crate::resample::{ess, multinomial_resample_log, resample_ancestors, DEFAULT_RACE_CAP};
use crate::rng::{self, StreamFamily};
use crate::schedule::{MMode, MSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "threshold")]
pub enum Resampling {
    Never,
    EveryStep,
    /// Resample when the effective sample size drops below `threshold * N`.
    EssBelow(f64),
}

impl std::str::FromStr for Resampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "never" => Ok(Self::Never),
            "every-step" => Ok(Self::EveryStep),
            "ess" => Ok(Self::EssBelow(0.5)),
            other => match other.strip_prefix("ess:") {
                Some(v) => v
                    .parse::<f64>()
                    .map(Self::EssBelow)
                    .map_err(|_| Error::Config(format!("bad ESS threshold `{v}`"))),
                None => Err(Error::Config(format!("unknown resampling policy `{other}`"))),
            },
        }
    }
}

impl std::fmt::Display for Resampling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Never => f.write_str("never"),
            Self::EveryStep => f.write_str("every-step"),
            Self::EssBelow(tau) => write!(f, "ess:{tau}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Vrpf,
    Fivo,
    Iwae,
    Elbo,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vrpf" => Ok(Self::Vrpf),
            "fivo" => Ok(Self::Fivo),
            "iwae" => Ok(Self::Iwae),
            "elbo" => Ok(Self::Elbo),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Skeleton settings.
#[derive(Clone, Copy, Debug)]
pub struct SmcOptions {
    pub n: usize,
    pub k: usize,
    pub resampling: Resampling,
    pub trial_cap: u64,
    pub race_cap: u64,
}

impl SmcOptions {
    pub fn new(n: usize, k: usize, resampling: Resampling) -> Self {
        Self {
            n,
            k,
            resampling,
            trial_cap: DEFAULT_TRIAL_CAP,
            race_cap: DEFAULT_RACE_CAP,
        }
    }
}

/// Record of one time step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    /// Index into the previous step's particles that each particle extends.
    /// All zeros at the first step, where every parent is `z_0 = 0`.
    pub parents: Vec<usize>,
    pub particles: Vec<DVector<f64>>,
    pub eps: Vec<Vec<f64>>,
    pub log_m: Vec<f64>,
    pub log_c: Vec<f64>,
    pub log_w_tilde: Vec<f64>,
    pub delta_eps: Vec<Vec<Vec<f64>>>,
    pub trials: Vec<u64>,
    /// Whether the estimate was accumulated at this step (resampling event
    /// or final step).
    pub event: bool,
    /// Whether ancestors were drawn after this step.
    pub resampled: bool,
    pub race_iterations: Vec<u64>,
    pub log_mean_w: f64,
}

/// All randomness and intermediate quantities of one bound evaluation.
#[derive(Clone, Debug, Default)]
pub struct ParticleSystem {
    pub steps: Vec<StepRecord>,
}

impl ParticleSystem {
    /// Latent that particle `i` at step `t` extends.
    pub fn parent_state(&self, t: usize, i: usize, d_z: usize) -> DVector<f64> {
        if t == 0 {
            DVector::zeros(d_z)
        } else {
            self.steps[t - 1].particles[self.steps[t].parents[i]].clone()
        }
    }
}

/// Resolved settings echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub estimator: Estimator,
    pub n: usize,
    pub k: usize,
    pub gamma: Option<f64>,
    pub m_mode: MMode,
    pub resampling: Resampling,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub config: ReportConfig,
    /// Per-step contributions; zero at steps without a resampling event.
    pub step_terms: Vec<f64>,
    pub bound: f64,
    pub mean_accept_trials: Vec<f64>,
    /// Accepted particles over proposals made, across all steps.
    pub acceptance_rate: f64,
    /// Mean race iterations per ancestor draw at each step (0 where none).
    pub mean_race_iters: Vec<f64>,
    pub race_iterations_mean: f64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl BoundReport {
    /// `t, log_mean_w, mean_accept_trials, mean_race_iters` rows.
    pub fn steps_csv(&self) -> String {
        let mut out = String::from("t,log_mean_w,mean_accept_trials,mean_race_iters\n");
        for t in 0..self.step_terms.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t + 1,
                crate::experiment::fmt_f64(self.step_terms[t]),
                crate::experiment::fmt_f64(self.mean_accept_trials[t]),
                crate::experiment::fmt_f64(self.mean_race_iters[t]),
            ));
        }
        out
    }
}

/// Core loop. `schedule` supplies `log M(i, t)`; [`MSchedule::zero`] turns
/// the rejection step off.
pub fn run_smc(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    opts: &SmcOptions,
    schedule: &MSchedule,
    streams: &mut StreamFamily,
) -> Result<ParticleSystem> {
    let n = opts.n;
    let steps = data.len();
    if n == 0 {
        return Err(Error::Config("number of particles must be at least 1".into()));
    }
    if opts.k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if steps == 0 {
        return Err(Error::Config("dataset must contain at least one step".into()));
    }
    if phi.dim() != model.d_z() || data.d_x() != model.d_x() {
        return Err(Error::Config("proposal, model and data dimensions disagree".into()));
    }
    if let Resampling::EssBelow(tau) = opts.resampling {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Config(format!("ESS threshold must lie in [0, 1], got {tau}")));
        }
    }
    schedule.validate(n, steps)?;

    const USED: [&str; 5] = [
        rng::PROPOSAL,
        rng::PRC_UNIFORM,
        rng::DELTA,
        rng::RACE_CATEGORICAL,
        rng::RACE_COIN,
    ];
    if let Some(missing) = USED.iter().find(|l| !streams.contains(l)) {
        return Err(Error::UnknownStream((*missing).to_owned()));
    }
    let mut taken: Vec<_> = USED.iter().map(|l| streams.take(l).expect("checked")).collect();

    let result = (|| {
        let [proposal, uniform, delta, categorical, coin] = taken.as_mut_slice() else {
            unreachable!()
        };
        let d_z = model.d_z();
        let zero = DVector::zeros(d_z);
        let mut system = ParticleSystem {
            steps: Vec::with_capacity(steps),
        };
        let mut carry = vec![0.0; n];
        let mut parents = vec![0usize; n];

        for (t, x_t) in data.observations.iter().enumerate() {
            let prev = system.steps.last();
            let parent_states: Vec<&DVector<f64>> = parents
                .iter()
                .map(|&p| prev.map_or(&zero, |s| &s.particles[p]))
                .collect();
            let sites: Vec<PrcSite<'_>> = (0..n)
                .map(|i| PrcSite {
                    model,
                    phi,
                    z_prev: parent_states[i],
                    x_t,
                    log_m: schedule.log_m(i, t),
                })
                .collect();

            let mut record = StepRecord {
                parents: parents.clone(),
                particles: Vec::with_capacity(n),
                eps: Vec::with_capacity(n),
                log_m: sites.iter().map(|s| s.log_m).collect(),
                log_c: Vec::with_capacity(n),
                log_w_tilde: Vec::with_capacity(n),
                delta_eps: Vec::with_capacity(n),
                trials: Vec::with_capacity(n),
                event: false,
                resampled: false,
                race_iterations: Vec::new(),
                log_mean_w: 0.0,
            };
            for (i, site) in sites.iter().enumerate() {
                let out = prc_step(site, opts.k, proposal, uniform, delta, opts.trial_cap, (t, i))?;
                record.particles.push(out.z);
                record.eps.push(out.eps);
                record.log_c.push(out.log_c);
                record.log_w_tilde.push(out.log_w_tilde);
                record.delta_eps.push(out.delta_eps);
                record.trials.push(out.trials);
            }

            let log_w: Vec<f64> = carry.iter().zip(&record.log_w_tilde).map(|(c, w)| c + w).collect();
            let lse = log_sum_exp(&log_w);
            if !lse.is_finite() {
                return Err(Error::DegenerateWeights { t });
            }
            let last = t + 1 == steps;
            let resample = !last
                && match opts.resampling {
                    Resampling::Never => false,
                    Resampling::EveryStep => true,
                    Resampling::EssBelow(tau) => ess(&softmax(&log_w)) < tau * n as f64,
                };

            if resample || last {
                record.event = true;
                record.log_mean_w = log_mean_exp(&log_w);
            }

            if resample {
                record.resampled = true;
                let race_log_w: Vec<f64> = carry.iter().zip(&record.log_c).map(|(c, l)| c + l).collect();
                if sites.iter().all(|s| s.log_m == f64::NEG_INFINITY) {
                    parents = multinomial_resample_log(&race_log_w, n, categorical)?;
                    record.race_iterations = vec![1; n];
                } else {
                    let outcomes =
                        resample_ancestors(&race_log_w, &sites, n, categorical, coin, opts.race_cap, t)?;
                    parents = outcomes.iter().map(|o| o.ancestor).collect();
                    record.race_iterations = outcomes.iter().map(|o| o.iterations).collect();
                }
                carry.iter_mut().for_each(|c| *c = 0.0);
            } else {
                carry = log_w;
                parents = (0..n).collect();
            }
            system.steps.push(record);
        }
        Ok(system)
    })();

    for s in taken {
        streams.restore(s);
    }
    result
}

/// Summarizes a particle system into a report.
pub fn report_from_system(system: &ParticleSystem, config: ReportConfig, elapsed: f64) -> BoundReport {
    let mut bound = 0.0;
    let mut step_terms = Vec::with_capacity(system.steps.len());
    let mut mean_accept_trials = Vec::with_capacity(system.steps.len());
    let mut mean_race_iters = Vec::with_capacity(system.steps.len());
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let (mut race_total, mut race_draws) = (0u64, 0u64);
    for s in &system.steps {
        step_terms.push(s.log_mean_w);
        bound += s.log_mean_w;
        let trials: u64 = s.trials.iter().sum();
        accepted += s.trials.len() as u64;
        proposed += trials;
        mean_accept_trials.push(trials as f64 / s.trials.len() as f64);
        let iters: u64 = s.race_iterations.iter().sum();
        race_total += iters;
        race_draws += s.race_iterations.len() as u64;
        mean_race_iters.push(if s.race_iterations.is_empty() {
            0.0
        } else {
            iters as f64 / s.race_iterations.len() as f64
        });
    }
    BoundReport {
        config,
        step_terms,
        bound,
        mean_accept_trials,
        acceptance_rate: accepted as f64 / proposed as f64,
        mean_race_iters,
        race_iterations_mean: if race_draws == 0 {
            0.0
        } else {
            race_total as f64 / race_draws as f64
        },
        wall_clock_secs: elapsed,
    }
}

/// Rejection-controlled particle filter with Bernoulli-race resampling at
/// every step.
#[allow(clippy::too_many_arguments)]
pub fn vrpf_estimate(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    n: usize,
    k: usize,
    schedule: &MSchedule,
    gamma: Option<f64>,
    streams: &mut StreamFamily,
) -> Result<(BoundReport, ParticleSystem)> {
    let start = Instant::now();
    let opts = SmcOptions::new(n, k, Resampling::EveryStep);
    let system = run_smc(model, phi, data, &opts, schedule, streams)?;
    let config = ReportConfig {
        estimator: Estimator::Vrpf,
        n,
        k,
        gamma,
        m_mode: schedule.mode(),
        resampling: Resampling::EveryStep,
        seed: streams.seed(),
    };
    let report = report_from_system(&system, config, start.elapsed().as_secs_f64());
    Ok((report, system))
}

/// Standard particle filter bound without rejection control.
pub fn fivo_estimate(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    n: usize,
    resampling: Resampling,
    streams: &mut StreamFamily,
) -> Result<BoundReport> {
    Ok(fivo_estimate_with_system(model, phi, data, n, resampling, streams)?.0)
}

pub fn fivo_estimate_with_system(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    n: usize,
    resampling: Resampling,
    streams: &mut StreamFamily,
) -> Result<(BoundReport, ParticleSystem)> {
    let start = Instant::now();
    let opts = SmcOptions::new(n, 1, resampling);
    let system = run_smc(model, phi, data, &opts, &MSchedule::zero(), streams)?;
    let config = ReportConfig {
        estimator: Estimator::Fivo,
        n,
        k: 1,
        gamma: None,
        m_mode: MMode::Constant,
        resampling,
        seed: streams.seed(),
    };
    let report = report_from_system(&system, config, start.elapsed().as_secs_f64());
    Ok((report, system))
}

/// Importance-weighted bound: no resampling, no rejection control.
pub fn iwae_estimate(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    n: usize,
    streams: &mut StreamFamily,
) -> Result<BoundReport> {
    let start = Instant::now();
    let opts = SmcOptions::new(n, 1, Resampling::Never);
    let system = run_smc(model, phi, data, &opts, &MSchedule::zero(), streams)?;
    let config = ReportConfig {
        estimator: if n == 1 { Estimator::Elbo } else { Estimator::Iwae },
        n,
        k: 1,
        gamma: None,
        m_mode: MMode::Constant,
        resampling: Resampling::Never,
        seed: streams.seed(),
    };
    Ok(report_from_system(&system, config, start.elapsed().as_secs_f64()))
}

/// Single-sample evidence lower bound.
pub fn elbo_estimate(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    streams: &mut StreamFamily,
) -> Result<BoundReport> {
    iwae_estimate(model, phi, data, 1, streams)
}

/// Recomputes the bound of a recorded system at new proposal parameters,
/// holding accepted particles, ancestors, event pattern and every noise
/// draw fixed.
pub fn replay_bound(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    system: &ParticleSystem,
) -> f64 {
    use crate::prc::{log_acceptance_log_m, log_c_multiplier_log_m};

    let d_z = model.d_z();
    let mut bound = 0.0;
    let mut carry: Vec<f64> = Vec::new();
    for (t, step) in system.steps.iter().enumerate() {
        let n = step.particles.len();
        if carry.len() != n {
            carry = vec![0.0; n];
        }
        let x_t = &data.observations[t];
        let mut log_w = Vec::with_capacity(n);
        for i in 0..n {
            let z_prev = system.parent_state(t, i, d_z);
            let mean = phi.mean(model, &z_prev);
            let z = &step.particles[i];
            let lp = model.incremental_logpdf_unchecked(z, &z_prev, x_t);
            let lq = phi.logpdf_at_mean(z, &mean);
            let log_m = step.log_m[i];
            let log_c = log_c_multiplier_log_m(lp, lq, log_m);
            let log_w_tilde = if step.delta_eps[i].is_empty() {
                log_c
            } else {
                let log_a: Vec<f64> = step.delta_eps[i]
                    .iter()
                    .map(|e| {
                        let delta = phi.transform(&mean, e);
                        let lp_d = model.incremental_logpdf_unchecked(&delta, &z_prev, x_t);
                        let lq_d = phi.logpdf_at_mean(&delta, &mean);
                        log_acceptance_log_m(lp_d, lq_d, log_m)
                    })
                    .collect();
                log_c + log_mean_exp(&log_a)
            };
            log_w.push(carry[i] + log_w_tilde);
        }
        if step.event {
            bound += log_mean_exp(&log_w);
        }
        if step.resampled {
            carry.iter_mut().for_each(|c| *c = 0.0);
        } else {
            carry = log_w;
        }
    }
    bound
}
