use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{Estimator, Resampling};
use crate::error::{Error, Result};
use crate::lgssm::EmissionKind;
use crate::proposal::ProposalParams;
use crate::schedule::MMode;
use crate::training::{GradientMode, OptimizerKind, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub d_z: usize,
    pub d_x: usize,
    pub alpha: f64,
    pub emission: EmissionKind,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            d_z: 1,
            d_x: 1,
            alpha: 0.42,
            emission: EmissionKind::Dense,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub steps: usize,
    /// Directory holding `dataset.csv` and `dataset.json`. When absent the
    /// dataset is simulated from the model spec and seed.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: Estimator,
    pub n: usize,
    pub k: usize,
    /// Quantile target for learning `M` before each replication. When absent
    /// the constant `m` is used.
    pub gamma: Option<f64>,
    pub m: f64,
    pub m_mode: MMode,
    pub j: usize,
    pub resampling: Resampling,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            kind: Estimator::Vrpf,
            n: 4,
            k: 3,
            gamma: None,
            m: 1.0,
            m_mode: MMode::PerParticle,
            j: 64,
            resampling: Resampling::EveryStep,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub epochs: usize,
    pub lr: f64,
    pub j: usize,
    pub f_update: usize,
    pub optimizer: OptimizerKind,
    /// Gradient used for runs without rejection control.
    pub baseline_gradient: GradientMode,
    /// Write a proposal checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
    pub init: Option<ProposalParams>,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 1e-3,
            j: 64,
            f_update: 10,
            optimizer: OptimizerKind::Sga,
            baseline_gradient: GradientMode::Reparameterized,
            checkpoint_every: 0,
            init: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    pub gammas: Vec<f64>,
    pub seeds: usize,
    /// Replications used to evaluate each trained bound.
    pub eval_reps: usize,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            gammas: vec![0.4, 0.8],
            seeds: 5,
            eval_reps: 1000,
        }
    }
}

/// Every setting of an experiment. Serialized verbatim into every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelSpec,
    pub data: DataSpec,
    pub estimator: EstimatorSpec,
    pub training: TrainingSpec,
    pub compare: CompareSpec,
    pub reps: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            model: ModelSpec::default(),
            data: DataSpec {
                steps: 10,
                path: None,
            },
            estimator: EstimatorSpec::default(),
            training: TrainingSpec::default(),
            compare: CompareSpec::default(),
            reps: 100,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.d_z == 0 || m.d_x == 0 {
            return Err(Error::Config("d_z and d_x must be at least 1".into()));
        }
        if m.emission == EmissionKind::Sparse && m.d_x > m.d_z {
            return Err(Error::Config(format!(
                "sparse emission needs d_x <= d_z, got d_x={}, d_z={}",
                m.d_x, m.d_z
            )));
        }
        if !m.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite".into()));
        }
        if self.data.path.is_none() && self.data.steps == 0 {
            return Err(Error::Config("data.steps must be at least 1".into()));
        }
        let e = &self.estimator;
        if e.n == 0 || e.k == 0 || e.j == 0 {
            return Err(Error::Config("estimator n, k and j must be at least 1".into()));
        }
        if let Some(g) = e.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("gamma must lie in [0, 1], got {g}")));
            }
        }
        if !(e.m >= 0.0) || !e.m.is_finite() {
            return Err(Error::Config(format!("M must be finite and >= 0, got {}", e.m)));
        }
        if let Resampling::EssBelow(tau) = e.resampling {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::Config(format!("ESS threshold must lie in [0, 1], got {tau}")));
            }
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.compare.gammas.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
            return Err(Error::Config("compare gammas must lie in (0, 1]".into()));
        }
        if self.compare.seeds == 0 || self.compare.eval_reps == 0 {
            return Err(Error::Config("compare seeds and eval_reps must be at least 1".into()));
        }
        self.train_config(e.gamma, e.n).validate()
    }

    /// Training settings for one run.
    pub fn train_config(&self, gamma: Option<f64>, n: usize) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            n,
            k: self.estimator.k,
            gamma,
            j: t.j,
            f_update: t.f_update,
            m_mode: self.estimator.m_mode,
            resampling: self.estimator.resampling,
            gradient: if gamma.is_some() {
                GradientMode::FixedParticles
            } else {
                t.baseline_gradient
            },
            optimizer: t.optimizer,
            lr: t.lr,
            epochs: t.epochs,
        }
    }
}
