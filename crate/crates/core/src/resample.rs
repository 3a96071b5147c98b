//! Ancestor sampling.
//!
//! The Bernoulli race draws an index with probability proportional to
//! `c_i Z_i` when only coins with success probability `Z_i` can be simulated:
//! propose `i ~ Categorical(c / sum c)`, flip coin `i`, and repeat until a
//! coin comes up true. Multinomial resampling and the effective sample size
//! support the baseline estimators.

use crate::error::{Error, Result};
use crate::prc::PrcSite;
use crate::rng::Stream;

/// Default cap on race iterations per ancestor draw.
pub const DEFAULT_RACE_CAP: u64 = 1_000_000;

/// Categorical distribution over `0..n` stored as cumulative weights.
#[derive(Clone, Debug)]
pub struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("categorical needs at least one weight".into()));
        }
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(weights.len());
        for &w in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("invalid categorical weight {w}")));
            }
            acc += w;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::Config("categorical weights sum to zero".into()));
        }
        Ok(Self { cumulative })
    }

    /// Weights `exp(x_i - max x)`.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Config("categorical log-weights have no finite maximum".into()));
        }
        let w: Vec<f64> = log_weights.iter().map(|x| (x - max).exp()).collect();
        Self::from_weights(&w)
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    pub fn probability(&self, i: usize) -> f64 {
        let lo = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        (self.cumulative[i] - lo) / self.total()
    }

    /// One draw; consumes exactly one uniform.
    pub fn sample(&self, stream: &mut Stream) -> usize {
        let u = stream.uniform() * self.total();
        let i = self.cumulative.partition_point(|&c| c <= u);
        // u * total can round up to total; fall back to the last index with mass.
        i.min(self.last_positive())
    }

    fn last_positive(&self) -> usize {
        let n = self.cumulative.len();
        (0..n)
            .rev()
            .find(|&i| self.probability(i) > 0.0)
            .unwrap_or(n - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RaceOutcome {
    pub ancestor: usize,
    pub iterations: u64,
}

/// Runs one Bernoulli race. `coin(i)` must return an event of probability
/// `Z_i`; the proposal categorical is drawn from `categorical_stream`.
pub fn bernoulli_race(
    proposal: &Categorical,
    mut coin: impl FnMut(usize) -> bool,
    categorical_stream: &mut Stream,
    cap: u64,
    t: usize,
) -> Result<RaceOutcome> {
    for iterations in 1..=cap {
        let i = proposal.sample(categorical_stream);
        if coin(i) {
            return Ok(RaceOutcome {
                ancestor: i,
                iterations,
            });
        }
    }
    Err(Error::RunawayRace { t, cap })
}

/// Draws `n` ancestors by independent races over the particles at one time
/// step. `log_c[i]` is the log multiplier of particle `i` and `sites[i]` the
/// proposal context whose acceptance coin estimates `Z_i`.
pub fn resample_ancestors(
    log_c: &[f64],
    sites: &[PrcSite<'_>],
    n: usize,
    categorical_stream: &mut Stream,
    coin_stream: &mut Stream,
    cap: u64,
    t: usize,
) -> Result<Vec<RaceOutcome>> {
    if n == 0 {
        return Err(Error::Config("number of particles must be at least 1".into()));
    }
    if log_c.len() != sites.len() {
        return Err(Error::Config("one site per multiplier required".into()));
    }
    let proposal = Categorical::from_log_weights(log_c)?;
    (0..n)
        .map(|_| {
            bernoulli_race(
                &proposal,
                |i| sites[i].flip_coin(coin_stream),
                categorical_stream,
                cap,
                t,
            )
        })
        .collect()
}

/// `n` i.i.d. categorical draws proportional to `weights`.
pub fn multinomial_resample(weights: &[f64], n: usize, stream: &mut Stream) -> Result<Vec<usize>> {
    let cat = Categorical::from_weights(weights)?;
    Ok((0..n).map(|_| cat.sample(stream)).collect())
}

/// Same as [`multinomial_resample`] with weights given in log space.
pub fn multinomial_resample_log(log_weights: &[f64], n: usize, stream: &mut Stream) -> Result<Vec<usize>> {
    let cat = Categorical::from_log_weights(log_weights)?;
    Ok((0..n).map(|_| cat.sample(stream)).collect())
}

/// Effective sample size `1 / sum w_i^2` of normalized weights.
pub fn ess(normalized: &[f64]) -> f64 {
    1.0 / normalized.iter().map(|w| w * w).sum::<f64>()
}
