//! Partial rejection control: an approximate accept/reject applied to the
//! newest latent of each trajectory.
//!
//! A proposal `z ~ q(. | z_prev)` is accepted with probability
//!
//! ```text
//! a(z) = 1 / (1 + M q(z) / p(x_t, z | z_prev))
//! ```
//!
//! and the accepted draw carries the multiplier `c = p / (q a) = p / q + M`.
//! Since the normalizer `Z = E_q[a]` is intractable, the particle weight is
//! estimated with `K` fresh draws: `w = (c / K) sum_k a(delta_k)`.
//!
//! The rejection-control constant is handled as `log M` throughout, with
//! `log M = -inf` encoding `M = 0`. At `M = 0` every routine short-circuits:
//! no uniforms and no `delta` draws are consumed.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lgssm::LgssmParams;
use crate::math::{log_add_exp, log_logistic, log_mean_exp, logistic};
use crate::proposal::ProposalParams;
use crate::rng::Stream;

/// Default cap on proposals per accepted particle.
pub const DEFAULT_TRIAL_CAP: u64 = 1_000_000;

#[inline]
pub fn is_zero_m(log_m: f64) -> bool {
    log_m == f64::NEG_INFINITY
}

/// `ln M`, mapping `M = 0` to `-inf`.
pub fn log_of_m(m: f64) -> Result<f64> {
    if !(m >= 0.0) || m.is_infinite() {
        return Err(Error::Config(format!("rejection-control constant must be finite and >= 0, got {m}")));
    }
    Ok(if m == 0.0 { f64::NEG_INFINITY } else { m.ln() })
}

/// `(1 + M exp(log_q - log_p))^{-1}`, evaluated as a logistic of the log ratio.
pub fn acceptance_probability(log_p_incr: f64, log_q: f64, m: f64) -> f64 {
    acceptance_probability_log_m(log_p_incr, log_q, if m == 0.0 { f64::NEG_INFINITY } else { m.ln() })
}

#[inline]
pub fn acceptance_probability_log_m(log_p_incr: f64, log_q: f64, log_m: f64) -> f64 {
    if is_zero_m(log_m) {
        return 1.0;
    }
    logistic(log_p_incr - log_q - log_m)
}

#[inline]
pub(crate) fn log_acceptance_log_m(log_p_incr: f64, log_q: f64, log_m: f64) -> f64 {
    if is_zero_m(log_m) {
        return 0.0;
    }
    log_logistic(log_p_incr - log_q - log_m)
}

/// `log c = log(p/q + M)`.
pub fn log_c_multiplier(log_p_incr: f64, log_q: f64, m: f64) -> f64 {
    log_c_multiplier_log_m(log_p_incr, log_q, if m == 0.0 { f64::NEG_INFINITY } else { m.ln() })
}

#[inline]
pub fn log_c_multiplier_log_m(log_p_incr: f64, log_q: f64, log_m: f64) -> f64 {
    let log_ratio = log_p_incr - log_q;
    if is_zero_m(log_m) {
        return log_ratio;
    }
    log_add_exp(log_ratio, log_m)
}

/// `w = c * mean(accept_evals)`.
pub fn estimate_weight(log_c: f64, accept_evals: &[f64]) -> Result<f64> {
    if accept_evals.is_empty() {
        return Err(Error::Config("weight estimate needs K >= 1 acceptance evaluations".into()));
    }
    let mean = accept_evals.iter().sum::<f64>() / accept_evals.len() as f64;
    Ok(log_c.exp() * mean)
}

/// Everything the proposal step produced for one particle at one time step.
#[derive(Clone, Debug)]
pub struct PrcOutcome {
    pub z: DVector<f64>,
    pub eps: Vec<f64>,
    pub trials: u64,
    pub log_c: f64,
    /// `log w`; `-inf` when every acceptance evaluation underflowed.
    pub log_w_tilde: f64,
    /// Acceptance probabilities at the `K` fresh draws. Empty when `M = 0`.
    pub accept_evals: Vec<f64>,
    /// Reparameterization noise of each fresh draw, kept for gradient replay.
    pub delta_eps: Vec<Vec<f64>>,
}

impl PrcOutcome {
    pub fn w_tilde(&self) -> f64 {
        self.log_w_tilde.exp()
    }
}

/// Where a particle is being proposed: the model, the proposal, the parent
/// latent, the observation and the rejection-control constant.
#[derive(Clone, Copy, Debug)]
pub struct PrcSite<'a> {
    pub model: &'a LgssmParams,
    pub phi: &'a ProposalParams,
    pub z_prev: &'a DVector<f64>,
    pub x_t: &'a DVector<f64>,
    pub log_m: f64,
}

impl PrcSite<'_> {
    /// `(log p_incr(z), log q(z))`.
    #[inline]
    pub fn log_densities(&self, z: &DVector<f64>, mean: &DVector<f64>) -> (f64, f64) {
        (
            self.model.incremental_logpdf_unchecked(z, self.z_prev, self.x_t),
            self.phi.logpdf_at_mean(z, mean),
        )
    }

    pub fn acceptance(&self, z: &DVector<f64>) -> f64 {
        let mean = self.phi.mean(self.model, self.z_prev);
        let (lp, lq) = self.log_densities(z, &mean);
        acceptance_probability_log_m(lp, lq, self.log_m)
    }

    /// One flip of the coin with success probability `Z = E_q[a]`: draws a
    /// fresh proposal and a uniform from `stream`. Always true, with no
    /// draws, when `M = 0`.
    pub fn flip_coin(&self, stream: &mut Stream) -> bool {
        if is_zero_m(self.log_m) {
            return true;
        }
        let (kappa, _) = self.phi.sample_reparam(self.model, self.z_prev, stream);
        let u = stream.uniform();
        u < self.acceptance(&kappa)
    }
}

/// Proposes until acceptance. Returns the accepted `(z, eps, trials)`.
pub fn prc_sample(
    site: &PrcSite<'_>,
    proposal_stream: &mut Stream,
    uniform_stream: &mut Stream,
    cap: u64,
    (t, particle): (usize, usize),
) -> Result<(DVector<f64>, Vec<f64>, u64)> {
    let mean = site.phi.mean(site.model, site.z_prev);
    let mut eps = vec![0.0; site.phi.dim()];
    for trials in 1..=cap {
        proposal_stream.fill_standard_normal(&mut eps);
        let z = site.phi.transform(&mean, &eps);
        if is_zero_m(site.log_m) {
            return Ok((z, eps, trials));
        }
        let (lp, lq) = site.log_densities(&z, &mean);
        let a = acceptance_probability_log_m(lp, lq, site.log_m);
        if uniform_stream.uniform() < a {
            return Ok((z, eps, trials));
        }
    }
    Err(Error::RunawayRejection {
        t,
        particle,
        log_m: site.log_m,
        cap,
    })
}

/// Full proposal step for one particle: rejection sampling, then the
/// multiplier and the `K`-draw weight estimate. The `delta` draws come from a
/// child of `delta_stream` forked once per particle, so the first `k` draws
/// coincide for every `K >= k` under a common seed.
pub fn prc_step(
    site: &PrcSite<'_>,
    k: usize,
    proposal_stream: &mut Stream,
    uniform_stream: &mut Stream,
    delta_stream: &mut Stream,
    cap: u64,
    at: (usize, usize),
) -> Result<PrcOutcome> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let (z, eps, trials) = prc_sample(site, proposal_stream, uniform_stream, cap, at)?;
    let mean = site.phi.mean(site.model, site.z_prev);
    let (lp, lq) = site.log_densities(&z, &mean);
    let log_c = log_c_multiplier_log_m(lp, lq, site.log_m);
    if !log_c.is_finite() {
        return Err(Error::NonFinite(format!("log multiplier at t={}, particle={}", at.0, at.1)));
    }

    if is_zero_m(site.log_m) {
        return Ok(PrcOutcome {
            z,
            eps,
            trials,
            log_c,
            log_w_tilde: log_c,
            accept_evals: Vec::new(),
            delta_eps: Vec::new(),
        });
    }

    let mut child = delta_stream.fork();
    let mut accept_evals = Vec::with_capacity(k);
    let mut log_accepts = Vec::with_capacity(k);
    let mut delta_eps = Vec::with_capacity(k);
    for _ in 0..k {
        let mut e = vec![0.0; site.phi.dim()];
        child.fill_standard_normal(&mut e);
        let delta = site.phi.transform(&mean, &e);
        let (lp_d, lq_d) = site.log_densities(&delta, &mean);
        accept_evals.push(acceptance_probability_log_m(lp_d, lq_d, site.log_m));
        log_accepts.push(log_acceptance_log_m(lp_d, lq_d, site.log_m));
        delta_eps.push(e);
    }
    let log_w_tilde = log_c + log_mean_exp(&log_accepts);
    Ok(PrcOutcome {
        z,
        eps,
        trials,
        log_c,
        log_w_tilde,
        accept_evals,
        delta_eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn acceptance_closed_forms() {
        assert_eq!(acceptance_probability(-3.0, 5.0, 0.0), 1.0);
        assert_eq!(acceptance_probability(-1.2, -1.2, 1.0), 0.5);
        let lq = -0.7;
        let lp = lq + 3f64.ln();
        assert!((acceptance_probability(lp, lq, 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn acceptance_is_overflow_safe() {
        assert_eq!(acceptance_probability(0.0, 2000.0, 1.0), 0.0);
        assert_eq!(acceptance_probability(2000.0, 0.0, 1.0), 1.0);
        assert!(log_c_multiplier(2000.0, 0.0, 1.0).is_finite());
    }

    #[test]
    fn multiplier_identities() {
        let lp = 2f64.ln() - 1.3;
        let lq = -1.3;
        assert!((log_c_multiplier(lp, lq, 0.5) - 2.5f64.ln()).abs() < 1e-14);
        assert_eq!(log_c_multiplier(lp, lq, 0.0), lp - lq);
    }

    #[test]
    fn acceptance_decreases_in_m() {
        let (lp, lq) = (-2.0, -1.5);
        let mut prev = 1.0;
        for m in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            let a = acceptance_probability(lp, lq, m);
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn weight_arithmetic() {
        assert!((estimate_weight(2f64.ln(), &[0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(estimate_weight(0.0, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn log_of_m_validates() {
        assert_eq!(log_of_m(0.0).unwrap(), f64::NEG_INFINITY);
        assert!(log_of_m(-1.0).is_err());
        assert!(log_of_m(f64::NAN).is_err());
    }

    fn degenerate_site_parts() -> (LgssmParams, ProposalParams, DVector<f64>, DVector<f64>) {
        let model = LgssmParams::new(DMatrix::from_element(1, 1, 0.4), DMatrix::zeros(1, 1)).unwrap();
        (model, ProposalParams::prior(1), DVector::from_element(1, 0.3), DVector::zeros(1))
    }

    #[test]
    fn zero_m_short_circuits() {
        let (model, phi, zp, x) = degenerate_site_parts();
        let site = PrcSite { model: &model, phi: &phi, z_prev: &zp, x_t: &x, log_m: f64::NEG_INFINITY };
        let mut prop = Stream::new(1, "proposal");
        let mut unif = Stream::new(1, "prc-uniform");
        let mut delta = Stream::new(1, "delta");
        let out = prc_step(&site, 3, &mut prop, &mut unif, &mut delta, 10, (0, 0)).unwrap();
        assert_eq!(out.trials, 1);
        assert!(out.accept_evals.is_empty());
        assert_eq!(out.log_w_tilde, out.log_c);
        assert_eq!(unif.next_u64(), Stream::new(1, "prc-uniform").next_u64());
        assert_eq!(delta.next_u64(), Stream::new(1, "delta").next_u64());
    }

    #[test]
    fn runaway_rejection_reports_site() {
        let (model, phi, zp, x) = degenerate_site_parts();
        let site = PrcSite { model: &model, phi: &phi, z_prev: &zp, x_t: &x, log_m: 800.0 };
        let mut prop = Stream::new(1, "proposal");
        let mut unif = Stream::new(1, "prc-uniform");
        let err = prc_sample(&site, &mut prop, &mut unif, 50, (4, 2)).unwrap_err();
        assert!(matches!(err, Error::RunawayRejection { t: 4, particle: 2, cap: 50, .. }));
    }
}
