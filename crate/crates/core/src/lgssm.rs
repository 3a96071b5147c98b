//! Linear Gaussian state-space model with identity noise:
//!
//! ```text
//! z_t = A z_{t-1} + e_z,   e_z ~ N(0, I),   z_0 = 0
//! x_t = C z_t     + e_x,   e_x ~ N(0, I)
//! ```
//!
//! Besides simulation and the incremental joint density used as particle
//! weights, the module carries the exact Kalman-filter log marginal
//! likelihood that every bound estimator is checked against.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `log N(x; mean, I)`.
pub fn log_std_normal_density(x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
    let d = x.len() as f64;
    -0.5 * d * LN_2PI - 0.5 * (x - mean).norm_squared()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmissionKind {
    /// `[I | 0]`: observes the first `d_x` latent coordinates.
    Sparse,
    /// I.i.d. standard-normal entries.
    Dense,
}

impl std::str::FromStr for EmissionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Self::Sparse),
            "dense" => Ok(Self::Dense),
            other => Err(Error::Config(format!("unknown emission kind `{other}`"))),
        }
    }
}

/// Model parameters. Noise covariances are the identity and `z_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LgssmParams {
    pub transition: DMatrix<f64>,
    pub emission: DMatrix<f64>,
}

impl LgssmParams {
    pub fn new(transition: DMatrix<f64>, emission: DMatrix<f64>) -> Result<Self> {
        if !transition.is_square() {
            return Err(Error::Config(format!(
                "transition matrix must be square, got {}x{}",
                transition.nrows(),
                transition.ncols()
            )));
        }
        if emission.ncols() != transition.nrows() {
            return Err(Error::Config(format!(
                "emission matrix has {} columns but latent dimension is {}",
                emission.ncols(),
                transition.nrows()
            )));
        }
        if transition.iter().chain(emission.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model matrices".into()));
        }
        Ok(Self {
            transition,
            emission,
        })
    }

    /// Model with `(A)_ij = alpha^{|i-j|+1}` and the requested emission matrix.
    pub fn from_alpha(
        alpha: f64,
        d_z: usize,
        d_x: usize,
        kind: EmissionKind,
        emission_stream: &mut Stream,
    ) -> Result<Self> {
        let a = build_transition_matrix(alpha, d_z)?;
        let c = build_emission_matrix(kind, d_x, d_z, emission_stream)?;
        Self::new(a, c)
    }

    pub fn d_z(&self) -> usize {
        self.transition.nrows()
    }

    pub fn d_x(&self) -> usize {
        self.emission.nrows()
    }

    /// `log N(z_t; A z_prev, I) + log N(x_t; C z_t, I)`.
    pub fn incremental_joint_logpdf(
        &self,
        z_t: &DVector<f64>,
        z_prev: &DVector<f64>,
        x_t: &DVector<f64>,
    ) -> Result<f64> {
        if z_t.len() != self.d_z() || z_prev.len() != self.d_z() || x_t.len() != self.d_x() {
            return Err(Error::Config("shape mismatch in incremental density".into()));
        }
        if z_t.iter().chain(z_prev.iter()).chain(x_t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("incremental density argument".into()));
        }
        Ok(self.incremental_logpdf_unchecked(z_t, z_prev, x_t))
    }

    #[inline]
    pub(crate) fn incremental_logpdf_unchecked(
        &self,
        z_t: &DVector<f64>,
        z_prev: &DVector<f64>,
        x_t: &DVector<f64>,
    ) -> f64 {
        let trans_mean = &self.transition * z_prev;
        let emit_mean = &self.emission * z_t;
        log_std_normal_density(z_t, &trans_mean) + log_std_normal_density(x_t, &emit_mean)
    }

    /// Gradient of the incremental density with respect to `z_t`:
    /// `-(z_t - A z_prev) + C^T (x_t - C z_t)`.
    pub(crate) fn incremental_grad_z(
        &self,
        z_t: &DVector<f64>,
        z_prev: &DVector<f64>,
        x_t: &DVector<f64>,
    ) -> DVector<f64> {
        let resid_z = z_t - &self.transition * z_prev;
        let resid_x = x_t - &self.emission * z_t;
        self.emission.tr_mul(&resid_x) - resid_z
    }
}

/// Symmetric matrix with entries `alpha^{|i-j|+1}`.
pub fn build_transition_matrix(alpha: f64, d_z: usize) -> Result<DMatrix<f64>> {
    if d_z == 0 {
        return Err(Error::Config("latent dimension must be at least 1".into()));
    }
    Ok(DMatrix::from_fn(d_z, d_z, |i, j| {
        alpha.powi(i.abs_diff(j) as i32 + 1)
    }))
}

pub fn build_emission_matrix(
    kind: EmissionKind,
    d_x: usize,
    d_z: usize,
    stream: &mut Stream,
) -> Result<DMatrix<f64>> {
    if d_x == 0 || d_z == 0 {
        return Err(Error::Config("dimensions must be at least 1".into()));
    }
    match kind {
        EmissionKind::Sparse => {
            if d_x > d_z {
                return Err(Error::Config(format!(
                    "sparse emission needs d_x <= d_z, got d_x={d_x}, d_z={d_z}"
                )));
            }
            Ok(DMatrix::from_fn(d_x, d_z, |i, j| if i == j { 1.0 } else { 0.0 }))
        }
        // Row-major fill so the draw order does not depend on storage layout.
        EmissionKind::Dense => {
            let mut c = DMatrix::zeros(d_x, d_z);
            for i in 0..d_x {
                for j in 0..d_z {
                    c[(i, j)] = stream.standard_normal();
                }
            }
            Ok(c)
        }
    }
}

/// Observation sequence, optionally with the latent path that generated it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub observations: Vec<DVector<f64>>,
    pub latents: Option<Vec<DVector<f64>>>,
}

impl Dataset {
    pub fn from_observations(observations: Vec<DVector<f64>>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Config("dataset must contain at least one step".into()));
        }
        let d = observations[0].len();
        for (t, x) in observations.iter().enumerate() {
            if x.len() != d {
                return Err(Error::Config(format!("observation {t} has inconsistent dimension")));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("observation {t}")));
            }
        }
        Ok(Self {
            observations,
            latents: None,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.observations.first().map_or(0, |x| x.len())
    }
}

/// Draws a latent path and observations, using `stream` for all noise.
pub fn simulate(params: &LgssmParams, steps: usize, stream: &mut Stream) -> Result<Dataset> {
    simulate_with_noise(params, steps, || stream.standard_normal())
}

/// Simulation with a caller-supplied noise source (transition noise first,
/// then emission noise, each step).
pub fn simulate_with_noise(
    params: &LgssmParams,
    steps: usize,
    mut noise: impl FnMut() -> f64,
) -> Result<Dataset> {
    if steps == 0 {
        return Err(Error::Config("sequence length must be at least 1".into()));
    }
    let (d_z, d_x) = (params.d_z(), params.d_x());
    let mut z = DVector::zeros(d_z);
    let mut latents = Vec::with_capacity(steps);
    let mut observations = Vec::with_capacity(steps);
    for _ in 0..steps {
        let e_z = DVector::from_fn(d_z, |_, _| noise());
        z = &params.transition * &z + e_z;
        let e_x = DVector::from_fn(d_x, |_, _| noise());
        let x = &params.emission * &z + e_x;
        latents.push(z.clone());
        observations.push(x);
    }
    Ok(Dataset {
        observations,
        latents: Some(latents),
    })
}

/// Output of the Kalman filter: the log marginal and its per-step
/// predictive terms `log p(x_t | x_{1:t-1})`.
#[derive(Clone, Debug)]
pub struct KalmanOutput {
    pub log_marginal: f64,
    pub step_log_predictive: Vec<f64>,
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
}

/// Kalman filter with Joseph-form covariance update.
pub fn kalman_filter(params: &LgssmParams, observations: &[DVector<f64>]) -> Result<KalmanOutput> {
    if observations.is_empty() {
        return Err(Error::Config("Kalman filter needs at least one observation".into()));
    }
    let (d_z, d_x) = (params.d_z(), params.d_x());
    let a = &params.transition;
    let c = &params.emission;
    let eye_z = DMatrix::<f64>::identity(d_z, d_z);
    let eye_x = DMatrix::<f64>::identity(d_x, d_x);

    let mut mean = DVector::zeros(d_z);
    let mut cov = DMatrix::zeros(d_z, d_z);
    let mut steps = Vec::with_capacity(observations.len());
    let mut means = Vec::with_capacity(observations.len());
    let mut covs = Vec::with_capacity(observations.len());

    for (t, x) in observations.iter().enumerate() {
        if x.len() != d_x {
            return Err(Error::Config(format!("observation {t} has wrong dimension")));
        }
        let pred_mean = a * &mean;
        let pred_cov = a * &cov * a.transpose() + &eye_z;

        let innovation = x - c * &pred_mean;
        let s = c * &pred_cov * c.transpose() + &eye_x;
        let s = (&s + s.transpose()) * 0.5;
        let chol = s.clone().cholesky().ok_or(Error::NotPositiveDefinite { t })?;
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let solved = chol.solve(&innovation);
        let maha = innovation.dot(&solved);
        let step = -0.5 * (d_x as f64 * LN_2PI + log_det + maha);
        if !step.is_finite() {
            return Err(Error::NotPositiveDefinite { t });
        }
        steps.push(step);

        // K = P C^T S^{-1}
        let gain = chol.solve(&(c * &pred_cov)).transpose();
        mean = &pred_mean + &gain * innovation;
        let i_kc = &eye_z - &gain * c;
        cov = &i_kc * &pred_cov * i_kc.transpose() + &gain * gain.transpose();
        means.push(mean.clone());
        covs.push(cov.clone());
    }

    let log_marginal = steps.iter().sum();
    Ok(KalmanOutput {
        log_marginal,
        step_log_predictive: steps,
        filtered_means: means,
        filtered_covs: covs,
    })
}

/// Exact `log p(x_{1:T})`.
pub fn kalman_logmarginal(params: &LgssmParams, observations: &[DVector<f64>]) -> Result<f64> {
    Ok(kalman_filter(params, observations)?.log_marginal)
}
