//! Experiment front end: configuration, dataset files, replicated bound
//! estimation, training runs and the method comparison.
//!
//! Every command writes the resolved configuration next to its outputs as
//! `config.json`, and every CSV starts with a `# config: ...` line holding
//! the same document. Floating-point values in CSV files carry 17
//! significant digits so they round-trip exactly.

mod config;
mod dataset;

pub mod cli;

pub use config::{CompareSpec, DataSpec, EstimatorSpec, ExperimentConfig, ModelSpec, TrainingSpec};
pub use dataset::{load_dataset, write_dataset, DatasetMeta};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    elbo_estimate, fivo_estimate, iwae_estimate, vrpf_estimate, BoundReport, Estimator, Resampling,
};
use crate::error::{Error, Result};
use crate::lgssm::{kalman_logmarginal, simulate, Dataset, LgssmParams};
use crate::math::{log_mean_exp, mean_and_se};
use crate::proposal::ProposalParams;
use crate::rng::{self, Stream, StreamFamily};
use crate::schedule::MSchedule;
use crate::training::{learn_schedule, optimize, TrainOutcome};

/// Environment variable holding the number of worker threads for
/// replications. Unset means one worker per core.
pub const WORKERS_ENV: &str = "VRPF_WORKERS";

/// Shortest decimal form with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Seed of replication `r` under a base seed. Replications are independent
/// of each other and of the order in which they run.
pub fn replication_seed(seed: u64, r: usize) -> u64 {
    Stream::derived(seed, "replication", r as u64, 0).next_u64()
}

/// Model, data and its exact log-marginal likelihood.
#[derive(Clone, Debug)]
pub struct Problem {
    pub model: LgssmParams,
    pub data: Dataset,
    pub log_marginal: f64,
}

impl Problem {
    /// Builds the model from the config seed and simulates a dataset, unless
    /// the config names a dataset directory to load instead.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let (model, data) = match &cfg.data.path {
            Some(dir) => {
                let (meta, data) = load_dataset(dir)?;
                (meta.model()?, data)
            }
            None => simulate_problem(cfg)?,
        };
        let log_marginal = kalman_logmarginal(&model, &data.observations)?;
        Ok(Self {
            model,
            data,
            log_marginal,
        })
    }
}

fn simulate_problem(cfg: &ExperimentConfig) -> Result<(LgssmParams, Dataset)> {
    let m = &cfg.model;
    let mut emission = Stream::new(cfg.seed, rng::EMISSION_INIT);
    let model = LgssmParams::from_alpha(m.alpha, m.d_z, m.d_x, m.emission, &mut emission)?;
    let mut sim = Stream::new(cfg.seed, rng::DATA_SIM);
    let data = simulate(&model, cfg.data.steps, &mut sim)?;
    Ok((model, data))
}

/// Initial proposal: the configured one, or the prior.
pub fn initial_proposal(cfg: &ExperimentConfig, d_z: usize) -> Result<ProposalParams> {
    match &cfg.training.init {
        Some(phi) if phi.dim() != d_z => Err(Error::Config(format!(
            "initial proposal has dimension {}, model has {d_z}",
            phi.dim()
        ))),
        Some(phi) => Ok(phi.clone()),
        None => Ok(ProposalParams::prior(d_z)),
    }
}

/// Runs the configured estimator once with its own stream family. With a
/// target quantile, a pilot run without rejection control supplies the
/// particles at which `M` is learned.
pub fn run_replication(
    problem: &Problem,
    phi: &ProposalParams,
    spec: &EstimatorSpec,
    seed: u64,
) -> Result<BoundReport> {
    let mut streams = StreamFamily::standard(seed);
    let (model, data) = (&problem.model, &problem.data);
    match spec.kind {
        Estimator::Vrpf => {
            if spec.resampling != Resampling::EveryStep {
                return Err(Error::Unsupported(
                    "the rejection-controlled filter resamples at every step".into(),
                ));
            }
            let schedule = match spec.gamma {
                Some(gamma) => {
                    let zero = MSchedule::zero();
                    let (_, pilot) =
                        vrpf_estimate(model, phi, data, spec.n, spec.k, &zero, None, &mut streams)?;
                    let tune = streams.get_mut(rng::M_TUNE)?;
                    learn_schedule(model, phi, data, &pilot, gamma, spec.j, spec.m_mode, tune)?
                }
                None => MSchedule::constant(spec.m)?,
            };
            let (report, _) =
                vrpf_estimate(model, phi, data, spec.n, spec.k, &schedule, spec.gamma, &mut streams)?;
            Ok(report)
        }
        Estimator::Fivo => fivo_estimate(model, phi, data, spec.n, spec.resampling, &mut streams),
        Estimator::Iwae => iwae_estimate(model, phi, data, spec.n, &mut streams),
        Estimator::Elbo => elbo_estimate(model, phi, data, &mut streams),
    }
}

/// Summary of replicated bound estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub estimator: Estimator,
    pub n: usize,
    pub k: usize,
    pub gamma: Option<f64>,
    pub reps: usize,
    pub mean_bound: f64,
    pub se_bound: f64,
    /// `log mean exp` of the replicated bounds: an estimate of the
    /// log-marginal likelihood itself.
    pub log_mean_exp_bound: f64,
    pub mean_acceptance_rate: f64,
    pub mean_race_iterations: f64,
    /// Not written to CSV, so repeated runs produce identical files.
    pub mean_wall_clock_secs: f64,
    pub kalman_log_marginal: f64,
}

impl EstimateSummary {
    pub fn csv_header() -> &'static str {
        "estimator,n,k,gamma,reps,mean_bound,se_bound,log_mean_exp_bound,mean_acceptance_rate,mean_race_iterations,kalman_log_marginal"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            serde_json::to_value(self.estimator)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            self.n,
            self.k,
            self.gamma.map(fmt_f64).unwrap_or_default(),
            self.reps,
            fmt_f64(self.mean_bound),
            fmt_f64(self.se_bound),
            fmt_f64(self.log_mean_exp_bound),
            fmt_f64(self.mean_acceptance_rate),
            fmt_f64(self.mean_race_iterations),
            fmt_f64(self.kalman_log_marginal),
        )
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(Error::Config(format!("{WORKERS_ENV} must be at least 1")));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs `reps` independent replications, in parallel, returning reports in
/// replication order. The first failing replication is reported.
pub fn replicate(
    problem: &Problem,
    phi: &ProposalParams,
    spec: &EstimatorSpec,
    seed: u64,
    reps: usize,
) -> Result<Vec<BoundReport>> {
    let pool = worker_pool()?;
    let results: Vec<Result<BoundReport>> = pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| run_replication(problem, phi, spec, replication_seed(seed, r)))
            .collect()
    });
    results
        .into_iter()
        .enumerate()
        .map(|(r, res)| {
            res.map_err(|e| Error::Replication {
                replication: r,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn summarize(reports: &[BoundReport], spec: &EstimatorSpec, kalman: f64) -> EstimateSummary {
    let bounds: Vec<f64> = reports.iter().map(|r| r.bound).collect();
    let (mean_bound, se_bound) = mean_and_se(&bounds);
    let avg = |f: &dyn Fn(&BoundReport) -> f64| {
        reports.iter().map(f).sum::<f64>() / reports.len().max(1) as f64
    };
    let first = reports.first().map(|r| &r.config);
    EstimateSummary {
        estimator: first.map_or(spec.kind, |c| c.estimator),
        n: spec.n,
        k: first.map_or(spec.k, |c| c.k),
        gamma: spec.gamma,
        reps: reports.len(),
        mean_bound,
        se_bound,
        log_mean_exp_bound: log_mean_exp(&bounds),
        mean_acceptance_rate: avg(&|r| r.acceptance_rate),
        mean_race_iterations: avg(&|r| r.race_iterations_mean),
        mean_wall_clock_secs: avg(&|r| r.wall_clock_secs),
        kalman_log_marginal: kalman,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a CSV whose first line is `# config: <resolved config as JSON>`.
pub(crate) fn write_csv(path: &Path, cfg: &ExperimentConfig, body: &str) -> Result<()> {
    let header = format!("# config: {}\n", serde_json::to_string(cfg)?);
    write_text(path, &(header + body))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn write_config(cfg: &ExperimentConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)
}

/// Builds the model, simulates `data.steps` observations and writes
/// `dataset.csv` and `dataset.json` to the output directory.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<DatasetMeta> {
    cfg.validate()?;
    let (model, data) = simulate_problem(cfg)?;
    write_config(cfg)?;
    write_dataset(&cfg.out, cfg, &model, &data)
}

#[derive(Serialize)]
struct ReplicationFile<'a> {
    replication: usize,
    seed: u64,
    config: &'a ExperimentConfig,
    report: &'a BoundReport,
}

/// Replicated bound estimation. Writes one JSON report per replication under
/// `reports/` and the aggregate to `estimate.csv`.
pub fn cmd_estimate(cfg: &ExperimentConfig) -> Result<EstimateSummary> {
    cfg.validate()?;
    let problem = Problem::from_config(cfg)?;
    let phi = initial_proposal(cfg, problem.model.d_z())?;
    let reports = replicate(&problem, &phi, &cfg.estimator, cfg.seed, cfg.reps)?;

    write_config(cfg)?;
    let dir = cfg.out.join("reports");
    create_dir(&dir)?;
    for (r, report) in reports.iter().enumerate() {
        let file = ReplicationFile {
            replication: r,
            seed: replication_seed(cfg.seed, r),
            config: cfg,
            report,
        };
        write_json(&dir.join(format!("rep_{r:05}.json")), &file)?;
    }
    let summary = summarize(&reports, &cfg.estimator, problem.log_marginal);
    write_csv(
        &cfg.out.join("estimate.csv"),
        cfg,
        &format!("{}\n{}\n", EstimateSummary::csv_header(), summary.csv_row()),
    )?;
    Ok(summary)
}

/// One training run of the configured estimator. With a target quantile the
/// rejection-controlled bound is trained, otherwise the plain filter bound.
pub fn train(
    problem: &Problem,
    cfg: &ExperimentConfig,
    gamma: Option<f64>,
    n: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    let init = initial_proposal(cfg, problem.model.d_z())?;
    let mut streams = StreamFamily::standard(seed);
    optimize(
        &problem.model,
        &problem.data,
        &init,
        &cfg.train_config(gamma, n),
        &mut streams,
    )
}

/// Trains the proposal. Writes `trace.csv`, `phi_final.json` and, when
/// `training.checkpoint_every` is positive, `checkpoints/phi_epoch_*.json`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let problem = Problem::from_config(cfg)?;
    let outcome = train(&problem, cfg, cfg.estimator.gamma, cfg.estimator.n, cfg.seed)?;

    write_config(cfg)?;
    write_csv(&cfg.out.join("trace.csv"), cfg, &outcome.trace.to_csv())?;
    write_json(&cfg.out.join("phi_final.json"), &outcome.phi)?;
    let every = cfg.training.checkpoint_every;
    if every > 0 {
        let dir = cfg.out.join("checkpoints");
        create_dir(&dir)?;
        for row in outcome.trace.rows.iter().filter(|r| (r.epoch + 1) % every == 0) {
            let phi = ProposalParams::new(row.mu.clone(), row.log_var.clone())?;
            write_json(&dir.join(format!("phi_epoch_{:06}.json", row.epoch + 1)), &phi)?;
        }
    }
    Ok(outcome)
}

/// One method of the comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub name: String,
    pub estimator: Estimator,
    /// Target quantile the method is paired with.
    pub gamma: f64,
    pub n: usize,
    /// Whether `M` is learned (rejection control on).
    pub rejection: bool,
    pub resampling: Resampling,
}

/// The rejection-controlled filter at each target quantile with `N`
/// particles, and for each quantile plain filters with `ceil(N / gamma)`
/// particles, which roughly matches the proposals the rejection-controlled
/// filter draws. Plain filters run both resampling at every step and
/// resampling when the effective sample size drops below `N / 2`.
pub fn compare_methods(cfg: &ExperimentConfig) -> Vec<Method> {
    let n = cfg.estimator.n;
    let mut methods = Vec::new();
    for &gamma in &cfg.compare.gammas {
        methods.push(Method {
            name: format!("vrpf-gamma{gamma}"),
            estimator: Estimator::Vrpf,
            gamma,
            n,
            rejection: true,
            resampling: Resampling::EveryStep,
        });
    }
    for (prefix, resampling) in [("fivo", Resampling::EveryStep), ("fivo-ess", Resampling::EssBelow(0.5))] {
        for &gamma in &cfg.compare.gammas {
            let n_base = (n as f64 / gamma).ceil() as usize;
            methods.push(Method {
                name: format!("{prefix}-n{n_base}"),
                estimator: Estimator::Fivo,
                gamma,
                n: n_base,
                rejection: false,
                resampling,
            });
        }
    }
    methods
}

/// Final bound of one method trained under one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub method: String,
    pub seed_index: usize,
    pub mean_bound: f64,
    pub se_bound: f64,
    pub mean_acceptance_rate: f64,
    pub aborted: Option<String>,
}

/// Seed-averaged final bound of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_bound: f64,
    /// Standard error across seeds.
    pub se_bound: f64,
    pub mean_acceptance_rate: f64,
    pub seeds: usize,
    pub kalman_log_marginal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub methods: Vec<MethodSummary>,
    pub per_seed: Vec<SeedResult>,
    pub kalman_log_marginal: f64,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,estimator,resampling,gamma,particles,mean_bound,se_bound,mean_acceptance_rate,seeds,kalman_log_marginal\n",
        );
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                m.method.name,
                if m.method.rejection { "vrpf" } else { "fivo" },
                m.method.resampling,
                fmt_f64(m.method.gamma),
                m.method.n,
                fmt_f64(m.mean_bound),
                fmt_f64(m.se_bound),
                fmt_f64(m.mean_acceptance_rate),
                m.seeds,
                fmt_f64(m.kalman_log_marginal),
            ));
        }
        out
    }

    pub fn per_seed_csv(&self) -> String {
        let mut out = String::from("method,seed_index,mean_bound,se_bound,mean_acceptance_rate,aborted\n");
        for s in &self.per_seed {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.method,
                s.seed_index,
                fmt_f64(s.mean_bound),
                fmt_f64(s.se_bound),
                fmt_f64(s.mean_acceptance_rate),
                s.aborted.as_deref().unwrap_or("").replace(',', ";"),
            ));
        }
        out
    }

    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method.name == name)
    }
}

/// Trains every method under `compare.seeds` seeds and evaluates each final
/// proposal over `compare.eval_reps` fresh replications. Runs of one seed
/// share a training seed across methods.
pub fn compare(problem: &Problem, cfg: &ExperimentConfig) -> Result<(Comparison, Vec<TrainOutcome>)> {
    let methods = compare_methods(cfg);
    let mut per_seed = Vec::new();
    let mut outcomes = Vec::new();
    for s in 0..cfg.compare.seeds {
        let seed_s = Stream::derived(cfg.seed, "compare-seed", s as u64, 0).next_u64();
        for method in &methods {
            let gamma = method.rejection.then_some(method.gamma);
            let spec = EstimatorSpec {
                kind: method.estimator,
                n: method.n,
                gamma,
                resampling: method.resampling,
                ..cfg.estimator.clone()
            };
            let mut method_cfg = cfg.clone();
            method_cfg.estimator.resampling = method.resampling;
            let outcome = train(problem, &method_cfg, gamma, method.n, seed_s)?;
            let eval_seed = Stream::derived(seed_s, "compare-eval", 0, 0).next_u64();
            let reports = replicate(problem, &outcome.phi, &spec, eval_seed, cfg.compare.eval_reps)?;
            let summary = summarize(&reports, &spec, problem.log_marginal);
            per_seed.push(SeedResult {
                method: method.name.clone(),
                seed_index: s,
                mean_bound: summary.mean_bound,
                se_bound: summary.se_bound,
                mean_acceptance_rate: summary.mean_acceptance_rate,
                aborted: outcome.trace.aborted.clone(),
            });
            outcomes.push(outcome);
        }
    }
    let summaries = methods
        .into_iter()
        .map(|method| {
            let rows: Vec<&SeedResult> = per_seed.iter().filter(|r| r.method == method.name).collect();
            let bounds: Vec<f64> = rows.iter().map(|r| r.mean_bound).collect();
            let (mean_bound, se_bound) = mean_and_se(&bounds);
            let mean_acceptance_rate =
                rows.iter().map(|r| r.mean_acceptance_rate).sum::<f64>() / rows.len() as f64;
            MethodSummary {
                method,
                mean_bound,
                se_bound,
                mean_acceptance_rate,
                seeds: rows.len(),
                kalman_log_marginal: problem.log_marginal,
            }
        })
        .collect();
    Ok((
        Comparison {
            methods: summaries,
            per_seed,
            kalman_log_marginal: problem.log_marginal,
        },
        outcomes,
    ))
}

/// Runs [`compare`] and writes `compare.csv`, `compare_seeds.csv` and one
/// training trace per run under `traces/`.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Comparison> {
    cfg.validate()?;
    let problem = Problem::from_config(cfg)?;
    let (comparison, outcomes) = compare(&problem, cfg)?;

    write_config(cfg)?;
    write_csv(&cfg.out.join("compare.csv"), cfg, &comparison.to_csv())?;
    write_csv(&cfg.out.join("compare_seeds.csv"), cfg, &comparison.per_seed_csv())?;
    let dir = cfg.out.join("traces");
    create_dir(&dir)?;
    for (row, outcome) in comparison.per_seed.iter().zip(&outcomes) {
        write_csv(
            &dir.join(format!("{}_seed{}.csv", row.method, row.seed_index)),
            cfg,
            &outcome.trace.to_csv(),
        )?;
    }
    Ok(comparison)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.837877066409345, 1e-300, 123456.789, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn replication_seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|r| replication_seed(3, r)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn baselines_get_ceil_n_over_gamma_particles() {
        let cfg = ExperimentConfig::default();
        let methods = compare_methods(&cfg);
        let ns: Vec<usize> = methods.iter().filter(|m| !m.rejection).map(|m| m.n).collect();
        assert_eq!(ns, vec![10, 5, 10, 5]);
    }

    #[test]
    fn replications_do_not_depend_on_worker_count() {
        let mut cfg = ExperimentConfig::default();
        cfg.data.steps = 4;
        let problem = Problem::from_config(&cfg).unwrap();
        let phi = ProposalParams::prior(1);
        let all = replicate(&problem, &phi, &cfg.estimator, 5, 6).unwrap();
        for (r, report) in all.iter().enumerate() {
            let one = run_replication(&problem, &phi, &cfg.estimator, replication_seed(5, r)).unwrap();
            assert_eq!(one.bound.to_bits(), report.bound.to_bits());
        }
    }
}
