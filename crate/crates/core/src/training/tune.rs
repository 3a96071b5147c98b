//! Learning the rejection-control constants from quantiles of
//! `F = log q - log p_incr`.
//!
//! For each particle and time step, `J` proposals are drawn from the
//! particle's proposal and `log M(i, t) = -Q_gamma`, where `Q_gamma` is the
//! nearest-rank quantile (the `ceil(gamma J)`-th order statistic, the minimum
//! at `gamma = 0`). A proposal whose `F` equals `Q_gamma` is then accepted
//! with probability exactly one half, and roughly a fraction `gamma` of
//! proposals is accepted with probability above one half.

use crate::bounds::ParticleSystem;
use crate::error::{Error, Result};
use crate::lgssm::{Dataset, LgssmParams};
use crate::proposal::ProposalParams;
use crate::rng::Stream;
use crate::schedule::{MMode, MSchedule};

/// The `ceil(gamma * n)`-th smallest value (1-based); the minimum for
/// `gamma = 0`. Sorts `values` in place.
pub fn nearest_rank_quantile(values: &mut [f64], gamma: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Config("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    values.sort_by(f64::total_cmp);
    let rank = ((gamma * values.len() as f64).ceil() as usize).max(1);
    Ok(values[rank.min(values.len()) - 1])
}

/// Draws `j` proposals from `q(. | z_prev)` and returns their `F` values.
pub fn f_samples(
    model: &LgssmParams,
    phi: &ProposalParams,
    z_prev: &nalgebra::DVector<f64>,
    x_t: &nalgebra::DVector<f64>,
    j: usize,
    stream: &mut Stream,
) -> Vec<f64> {
    (0..j)
        .map(|_| {
            let (z, _) = phi.sample_reparam(model, z_prev, stream);
            phi.f_statistic(model, &z, z_prev, x_t)
        })
        .collect()
}

/// `log M(i, t) = -Q_gamma` for every particle of a recorded system, indexed
/// `[t][i]`. Particle `i` at step `t` uses the latent it extended in `system`.
pub fn learn_m_per_particle(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    system: &ParticleSystem,
    gamma: f64,
    j: usize,
    stream: &mut Stream,
) -> Result<Vec<Vec<f64>>> {
    if j == 0 {
        return Err(Error::Config("J must be at least 1".into()));
    }
    let d_z = model.d_z();
    let mut out = Vec::with_capacity(system.steps.len());
    for (t, step) in system.steps.iter().enumerate() {
        let x_t = &data.observations[t];
        let mut row = Vec::with_capacity(step.particles.len());
        for i in 0..step.particles.len() {
            let z_prev = system.parent_state(t, i, d_z);
            let mut fs = f_samples(model, phi, &z_prev, x_t, j, stream);
            row.push(-nearest_rank_quantile(&mut fs, gamma)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// `log M(., t) = min_i log M(i, t)`.
pub fn learn_m_shared(per_particle_log_m: &[f64]) -> Result<f64> {
    per_particle_log_m
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| Error::Config("shared M needs at least one particle".into()))
}

/// Learns a schedule in the requested mode.
#[allow(clippy::too_many_arguments)]
pub fn learn_schedule(
    model: &LgssmParams,
    phi: &ProposalParams,
    data: &Dataset,
    system: &ParticleSystem,
    gamma: f64,
    j: usize,
    mode: MMode,
    stream: &mut Stream,
) -> Result<MSchedule> {
    let per_particle = learn_m_per_particle(model, phi, data, system, gamma, j, stream)?;
    match mode {
        MMode::PerParticle => MSchedule::per_particle_log(per_particle),
        MMode::SharedPerTime => {
            let shared = per_particle
                .iter()
                .map(|row| learn_m_shared(row))
                .collect::<Result<Vec<_>>>()?;
            MSchedule::shared_log(shared)
        }
        MMode::Constant => {
            let all: Vec<f64> = per_particle.into_iter().flatten().collect();
            MSchedule::constant_log(learn_m_shared(&all)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistic_rule() {
        let mut fs = vec![2.0, -1.0, 1.0, 0.0];
        assert_eq!(nearest_rank_quantile(&mut fs, 0.5).unwrap(), 0.0);
        assert_eq!(nearest_rank_quantile(&mut fs, 0.0).unwrap(), -1.0);
        assert_eq!(nearest_rank_quantile(&mut fs, 1.0).unwrap(), 2.0);
        assert_eq!(nearest_rank_quantile(&mut fs, 0.51).unwrap(), 1.0);
        assert!(nearest_rank_quantile(&mut [], 0.5).is_err());
        assert!(nearest_rank_quantile(&mut fs, 1.5).is_err());
    }

    #[test]
    fn shared_is_minimum() {
        assert_eq!(learn_m_shared(&[-1.0, 0.5]).unwrap(), -1.0);
        assert_eq!(learn_m_shared(&[0.25]).unwrap(), 0.25);
        assert!(learn_m_shared(&[]).is_err());
    }

    #[test]
    fn quantile_of_four_gives_unit_m() {
        let mut fs = vec![-1.0, 0.0, 1.0, 2.0];
        let log_m = -nearest_rank_quantile(&mut fs, 0.5).unwrap();
        assert_eq!(log_m.exp(), 1.0);
    }
}
