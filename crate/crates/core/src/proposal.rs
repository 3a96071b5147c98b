//! Gaussian proposal `q(z_t | z_{t-1}) = N(A z_{t-1} + mu, diag(exp(log_var)))`
//! with parameters shared across time.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lgssm::{LgssmParams, LN_2PI};
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalParams {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl ProposalParams {
    pub fn new(mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mu.len() != log_var.len() || mu.is_empty() {
            return Err(Error::Config(format!(
                "proposal mu and log_var must have the same non-zero length, got {} and {}",
                mu.len(),
                log_var.len()
            )));
        }
        if mu.iter().chain(&log_var).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("proposal parameters".into()));
        }
        Ok(Self { mu, log_var })
    }

    /// `mu = 0`, unit variance: the model's transition density.
    pub fn prior(d_z: usize) -> Self {
        Self {
            mu: vec![0.0; d_z],
            log_var: vec![0.0; d_z],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn std_dev(&self, d: usize) -> f64 {
        (0.5 * self.log_var[d]).exp()
    }

    /// Flattened `(mu, log_var)`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.mu.iter().chain(&self.log_var).copied().collect()
    }

    pub fn from_slice(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::Config("flattened proposal must have even length".into()));
        }
        let d = flat.len() / 2;
        Self::new(flat[..d].to_vec(), flat[d..].to_vec())
    }

    /// Mean of the proposal given the previous latent: `A z_prev + mu`.
    pub fn mean(&self, model: &LgssmParams, z_prev: &DVector<f64>) -> DVector<f64> {
        let mut m = &model.transition * z_prev;
        for (md, mu) in m.iter_mut().zip(&self.mu) {
            *md += mu;
        }
        m
    }

    /// `mean + sigma * eps`.
    pub fn transform(&self, mean: &DVector<f64>, eps: &[f64]) -> DVector<f64> {
        DVector::from_fn(mean.len(), |d, _| mean[d] + self.std_dev(d) * eps[d])
    }

    /// Draws `eps` from `stream` and returns `(z, eps)`.
    pub fn sample_reparam(
        &self,
        model: &LgssmParams,
        z_prev: &DVector<f64>,
        stream: &mut Stream,
    ) -> (DVector<f64>, Vec<f64>) {
        let mut eps = vec![0.0; self.dim()];
        stream.fill_standard_normal(&mut eps);
        let z = self.transform(&self.mean(model, z_prev), &eps);
        (z, eps)
    }

    /// Diagonal-Gaussian log density at `z` for the given proposal mean.
    pub fn logpdf_at_mean(&self, z: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for d in 0..self.dim() {
            let r = z[d] - mean[d];
            acc += -0.5 * LN_2PI - 0.5 * self.log_var[d] - 0.5 * r * r * (-self.log_var[d]).exp();
        }
        acc
    }

    pub fn logpdf(&self, model: &LgssmParams, z: &DVector<f64>, z_prev: &DVector<f64>) -> f64 {
        self.logpdf_at_mean(z, &self.mean(model, z_prev))
    }

    /// Log density of a reparameterized draw, which depends on `eps` only
    /// through `-0.5 * |eps|^2`.
    pub fn logpdf_from_eps(&self, eps: &[f64]) -> f64 {
        let mut acc = 0.0;
        for d in 0..self.dim() {
            acc += -0.5 * LN_2PI - 0.5 * self.log_var[d] - 0.5 * eps[d] * eps[d];
        }
        acc
    }

    /// `F = log q(z | z_prev) - log p(x_t, z | z_prev)`.
    pub fn f_statistic(
        &self,
        model: &LgssmParams,
        z: &DVector<f64>,
        z_prev: &DVector<f64>,
        x_t: &DVector<f64>,
    ) -> f64 {
        self.logpdf(model, z, z_prev) - model.incremental_logpdf_unchecked(z, z_prev, x_t)
    }

    /// Gradient of `log q(z)` at fixed `z` with respect to `(mu, log_var)`,
    /// accumulated as `out += scale * grad`.
    pub(crate) fn accumulate_score_fixed_z(
        &self,
        z: &DVector<f64>,
        mean: &DVector<f64>,
        scale: f64,
        d_mu: &mut [f64],
        d_log_var: &mut [f64],
    ) {
        for d in 0..self.dim() {
            let inv_var = (-self.log_var[d]).exp();
            let r = z[d] - mean[d];
            d_mu[d] += scale * r * inv_var;
            d_log_var[d] += scale * (-0.5 + 0.5 * r * r * inv_var);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar_model(a: f64, c: f64) -> LgssmParams {
        LgssmParams::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, c)).unwrap()
    }

    #[test]
    fn affine_reparameterization() {
        let model = scalar_model(0.0, 1.0);
        let phi = ProposalParams::prior(1);
        let z = phi.transform(&phi.mean(&model, &DVector::zeros(1)), &[0.0]);
        assert_eq!(z[0], 0.0);

        let phi = ProposalParams::new(vec![1.0], vec![4f64.ln()]).unwrap();
        let z = phi.transform(&phi.mean(&model, &DVector::zeros(1)), &[0.5]);
        assert!((z[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn logpdf_at_mode_and_factorization() {
        let model = scalar_model(0.3, 1.0);
        let phi = ProposalParams::prior(1);
        let zp = DVector::from_element(1, 2.0);
        let z = DVector::from_element(1, 0.6);
        assert!((phi.logpdf(&model, &z, &zp) + 0.918_938_533_204_672_7).abs() < 1e-12);

        let model2 = LgssmParams::new(DMatrix::zeros(2, 2), DMatrix::zeros(1, 2)).unwrap();
        let phi2 = ProposalParams::new(vec![0.2, -0.4], vec![0.3, -1.1]).unwrap();
        let z2 = DVector::from_column_slice(&[1.0, -2.0]);
        let joint = phi2.logpdf(&model2, &z2, &DVector::zeros(2));
        let m1 = scalar_model(0.0, 0.0);
        let a = ProposalParams::new(vec![0.2], vec![0.3]).unwrap();
        let b = ProposalParams::new(vec![-0.4], vec![-1.1]).unwrap();
        let sum = a.logpdf(&m1, &DVector::from_element(1, 1.0), &DVector::zeros(1))
            + b.logpdf(&m1, &DVector::from_element(1, -2.0), &DVector::zeros(1));
        assert!((joint - sum).abs() < 1e-12);
    }

    #[test]
    fn f_statistic_prior_proposal_zero_emission() {
        let model = scalar_model(0.5, 0.0);
        let phi = ProposalParams::prior(1);
        let x = DVector::zeros(1);
        for z in [-3.0, 0.0, 1.7] {
            let f = phi.f_statistic(&model, &DVector::from_element(1, z), &DVector::from_element(1, 1.0), &x);
            assert!((f - 0.918_938_533_204_672_7).abs() < 1e-12, "F = {f}");
        }
    }

    #[test]
    fn eps_density_matches_direct_density() {
        let model = scalar_model(0.7, 1.0);
        let phi = ProposalParams::new(vec![0.4], vec![-0.6]).unwrap();
        let zp = DVector::from_element(1, -1.2);
        let mean = phi.mean(&model, &zp);
        let z = phi.transform(&mean, &[0.83]);
        assert!((phi.logpdf_from_eps(&[0.83]) - phi.logpdf(&model, &z, &zp)).abs() < 1e-12);
    }

    #[test]
    fn sample_mean_matches() {
        let model = scalar_model(0.5, 1.0);
        let phi = ProposalParams::new(vec![0.3], vec![0.5]).unwrap();
        let zp = DVector::from_element(1, 2.0);
        let mut s = Stream::new(2, "proposal");
        let n = 100_000;
        let mean = (0..n).map(|_| phi.sample_reparam(&model, &zp, &mut s).0[0]).sum::<f64>() / n as f64;
        let se = phi.std_dev(0) / (n as f64).sqrt();
        assert!((mean - 1.3).abs() < 3.0 * se, "mean = {mean}");
    }

    #[test]
    fn json_shape() {
        let phi = ProposalParams::new(vec![1.0], vec![0.0]).unwrap();
        let json = serde_json::to_string(&phi).unwrap();
        assert_eq!(json, r#"{"mu":[1.0],"log_var":[0.0]}"#);
    }
}
