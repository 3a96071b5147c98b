//! Gradients of the bound estimate with respect to `(mu, log_var)`.
//!
//! [`pathwise_gradient`] is the biased pathwise gradient used to train the
//! rejection-controlled filter: accepted particles and ancestors are held
//! fixed (rejection makes them non-reparameterizable), while the fresh draws
//! behind the weight estimate move with the parameters through their stored
//! noise. The score-function terms for the rejection step and for resampling
//! are not estimated.
//!
//! [`reparam_gradient`] is the usual reparameterized particle-filter gradient
//! for runs without rejection control: every particle is a differentiable
//! function of its noise and its ancestor's path, and the resampling score is
//! dropped.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::{ParticleSystem, StepRecord};
use crate::error::{Error, Result};
use crate::lgssm::{Dataset, LgssmParams};
use crate::math::{log_logistic, log_mean_exp, logistic, softmax};
use crate::prc::{is_zero_m, log_c_multiplier_log_m};
use crate::proposal::ProposalParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradEstimate {
    pub d_mu: Vec<f64>,
    pub d_log_var: Vec<f64>,
}

impl GradEstimate {
    pub fn zeros(d: usize) -> Self {
        Self {
            d_mu: vec![0.0; d],
            d_log_var: vec![0.0; d],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.d_mu.iter().chain(&self.d_log_var).copied().collect()
    }

    pub fn from_slice(flat: &[f64]) -> Self {
        let d = flat.len() / 2;
        Self {
            d_mu: flat[..d].to_vec(),
            d_log_var: flat[d..].to_vec(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.d_mu.iter().chain(&self.d_log_var).all(|g| g.is_finite())
    }

    fn axpy(&mut self, scale: f64, other: &GradEstimate) {
        for (a, b) in self.d_mu.iter_mut().zip(&other.d_mu) {
            *a += scale * b;
        }
        for (a, b) in self.d_log_var.iter_mut().zip(&other.d_log_var) {
            *a += scale * b;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Accepted particles fixed; only the weight-estimate draws move.
    FixedParticles,
    /// Whole trajectories reparameterized; requires `M = 0`.
    Reparameterized,
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-particles" | "pathwise" => Ok(Self::FixedParticles),
            "reparameterized" | "reparam" => Ok(Self::Reparameterized),
            other => Err(Error::Config(format!("unknown gradient mode `{other}`"))),
        }
    }
}

/// Combines per-particle log-weight increments and their gradients into the
/// bound gradient, following the event pattern of the recorded run.
fn accumulate_over_steps(
    system: &ParticleSystem,
    d: usize,
    mut per_particle: impl FnMut(usize, &StepRecord, usize) -> (f64, GradEstimate),
) -> GradEstimate {
    let mut total = GradEstimate::zeros(d);
    let mut carry: Vec<f64> = Vec::new();
    let mut d_carry: Vec<GradEstimate> = Vec::new();
    for (t, step) in system.steps.iter().enumerate() {
        let n = step.particles.len();
        if carry.len() != n {
            carry = vec![0.0; n];
            d_carry = vec![GradEstimate::zeros(d); n];
        }
        let mut log_w = Vec::with_capacity(n);
        let mut d_log_w = Vec::with_capacity(n);
        for i in 0..n {
            let (lw, mut g) = per_particle(t, step, i);
            g.axpy(1.0, &d_carry[i]);
            log_w.push(carry[i] + lw);
            d_log_w.push(g);
        }
        if step.event {
            for (w, g) in softmax(&log_w).iter().zip(&d_log_w) {
                total.axpy(*w, g);
            }
        }
        if step.resampled {
            carry.iter_mut().for_each(|c| *c = 0.0);
            d_carry.iter_mut().for_each(|g| *g = GradEstimate::zeros(d));
        } else {
            carry = log_w;
            d_carry = d_log_w;
        }
    }
    total
}

/// Pathwise gradient of the recorded run's bound at `phi`, with accepted
/// particles and ancestors as constants.
pub fn pathwise_gradient_of_system(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    system: &ParticleSystem,
) -> GradEstimate {
    let d = phi.dim();
    accumulate_over_steps(system, d, |t, step, i| {
        let x_t = &data.observations[t];
        let z_prev = system.parent_state(t, i, d);
        let mean = phi.mean(model, &z_prev);
        let z = &step.particles[i];
        let log_m = step.log_m[i];
        let lp = model.incremental_logpdf_unchecked(z, &z_prev, x_t);
        let lq = phi.logpdf_at_mean(z, &mean);
        let log_c = log_c_multiplier_log_m(lp, lq, log_m);

        // d log c = -a(z) d log q(z), with a = 1 when M = 0.
        let mut g = GradEstimate::zeros(d);
        let a_z = if is_zero_m(log_m) { 1.0 } else { logistic(lp - lq - log_m) };
        phi.accumulate_score_fixed_z(z, &mean, -a_z, &mut g.d_mu, &mut g.d_log_var);

        if step.delta_eps[i].is_empty() {
            return (log_c, g);
        }

        let deltas = &step.delta_eps[i];
        let mut log_a = Vec::with_capacity(deltas.len());
        let mut d_log_a = Vec::with_capacity(deltas.len());
        for e in deltas {
            let delta = phi.transform(&mean, e);
            let lp_d = model.incremental_logpdf_unchecked(&delta, &z_prev, x_t);
            let lq_d = phi.logpdf_at_mean(&delta, &mean);
            let arg = lp_d - lq_d - log_m;
            log_a.push(log_logistic(arg));
            // d log a = (1 - a) dg, g = log p(delta) - log q(delta) - log M;
            // along the reparameterization d log q(delta) = -1/2 d log_var.
            let one_minus_a = logistic(-arg);
            let grad_lp = model.incremental_grad_z(&delta, &z_prev, x_t);
            let mut gk = GradEstimate::zeros(d);
            for j in 0..d {
                gk.d_mu[j] = one_minus_a * grad_lp[j];
                gk.d_log_var[j] = one_minus_a * (grad_lp[j] * 0.5 * phi.std_dev(j) * e[j] + 0.5);
            }
            d_log_a.push(gk);
        }
        for (w, gk) in softmax(&log_a).iter().zip(&d_log_a) {
            g.axpy(*w, gk);
        }
        (log_c + log_mean_exp(&log_a), g)
    })
}

/// Bound of a recorded run with every particle rebuilt from its stored noise
/// and its ancestor path at `phi`. Only meaningful for runs with `M = 0`.
pub fn replay_bound_reparam(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    system: &ParticleSystem,
) -> f64 {
    let d = phi.dim();
    let mut bound = 0.0;
    let mut carry: Vec<f64> = Vec::new();
    let mut prev: Vec<DVector<f64>> = Vec::new();
    for (t, step) in system.steps.iter().enumerate() {
        let n = step.particles.len();
        if carry.len() != n {
            carry = vec![0.0; n];
        }
        let x_t = &data.observations[t];
        let mut current = Vec::with_capacity(n);
        let mut log_w = Vec::with_capacity(n);
        for i in 0..n {
            let z_prev = if t == 0 {
                DVector::zeros(d)
            } else {
                prev[step.parents[i]].clone()
            };
            let mean = phi.mean(model, &z_prev);
            let z = phi.transform(&mean, &step.eps[i]);
            let lp = model.incremental_logpdf_unchecked(&z, &z_prev, x_t);
            let lq = phi.logpdf_at_mean(&z, &mean);
            log_w.push(carry[i] + lp - lq);
            current.push(z);
        }
        if step.event {
            bound += log_mean_exp(&log_w);
        }
        if step.resampled {
            carry.iter_mut().for_each(|c| *c = 0.0);
        } else {
            carry = log_w;
        }
        prev = current;
    }
    bound
}

/// Reparameterized gradient of a recorded `M = 0` run.
pub fn reparam_gradient_of_system(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    system: &ParticleSystem,
) -> Result<GradEstimate> {
    if system.steps.iter().any(|s| s.log_m.iter().any(|m| !is_zero_m(*m))) {
        return Err(Error::Unsupported(
            "reparameterized gradient requires a run without rejection control".into(),
        ));
    }
    let d = phi.dim();
    let sigma: Vec<f64> = (0..d).map(|j| phi.std_dev(j)).collect();
    // Jacobians dz/d(mu, log_var), d x 2d, of the previous step's particles.
    let mut prev_jac: Vec<DMatrix<f64>> = Vec::new();
    let mut jac_cur: Vec<DMatrix<f64>> = Vec::new();
    let mut last_t = usize::MAX;

    Ok(accumulate_over_steps(system, d, |t, step, i| {
        if t != last_t {
            prev_jac = std::mem::take(&mut jac_cur);
            last_t = t;
        }
        let x_t = &data.observations[t];
        let e = &step.eps[i];
        let z_prev = system.parent_state(t, i, d);
        let z = &step.particles[i];

        let mut jac = if t == 0 {
            DMatrix::zeros(d, 2 * d)
        } else {
            &model.transition * &prev_jac[step.parents[i]]
        };
        for j in 0..d {
            jac[(j, j)] += 1.0;
            jac[(j, d + j)] += 0.5 * sigma[j] * e[j];
        }

        let mean = phi.mean(model, &z_prev);
        let lp = model.incremental_logpdf_unchecked(z, &z_prev, x_t);
        let lq = phi.logpdf_at_mean(z, &mean);

        // Transition term: -(mu + sigma e) . d(mu + sigma e); emission term
        // through the Jacobian; -log q contributes +1/2 per log-variance.
        let emit_grad = model.emission.tr_mul(&(x_t - &model.emission * z));
        let emit = jac.tr_mul(&emit_grad);
        let mut g = GradEstimate::zeros(d);
        for j in 0..d {
            let step_j = phi.mu[j] + sigma[j] * e[j];
            g.d_mu[j] = -step_j + emit[j];
            g.d_log_var[j] = -step_j * 0.5 * sigma[j] * e[j] + emit[d + j] + 0.5;
        }
        jac_cur.push(jac);
        (lp - lq, g)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{run_smc, Resampling, SmcOptions};
    use crate::rng::StreamFamily;
    use crate::schedule::MSchedule;

    fn scalar_model(a: f64, c: f64) -> LgssmParams {
        LgssmParams::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, c)).unwrap()
    }

    /// Single particle, single step, no rejection, particle pinned at z = 1.
    #[test]
    fn gaussian_score_at_fixed_particle() {
        let model = scalar_model(0.0, 1.0);
        let phi = ProposalParams::prior(1);
        let data = Dataset::from_observations(vec![DVector::from_element(1, 0.7)]).unwrap();
        let mut streams = StreamFamily::standard(1);
        let mut system = run_smc(
            &model,
            &phi,
            &data,
            &SmcOptions::new(1, 1, Resampling::EveryStep),
            &MSchedule::zero(),
            &mut streams,
        )
        .unwrap();
        system.steps[0].particles[0] = DVector::from_element(1, 1.0);
        let g = pathwise_gradient_of_system(&model, &phi, &data, &system);
        assert!((g.d_mu[0] + 1.0).abs() < 1e-14, "{g:?}");
        assert!(g.d_log_var[0].abs() < 1e-14, "{g:?}");
    }

    #[test]
    fn reparam_requires_zero_m() {
        let model = scalar_model(0.5, 1.0);
        let phi = ProposalParams::prior(1);
        let data = Dataset::from_observations(vec![DVector::from_element(1, 0.7)]).unwrap();
        let mut streams = StreamFamily::standard(1);
        let system = run_smc(
            &model,
            &phi,
            &data,
            &SmcOptions::new(2, 1, Resampling::EveryStep),
            &MSchedule::constant(1.0).unwrap(),
            &mut streams,
        )
        .unwrap();
        assert!(matches!(
            reparam_gradient_of_system(&model, &phi, &data, &system),
            Err(Error::Unsupported(_))
        ));
    }
}
