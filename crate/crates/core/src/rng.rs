//! Seedable random streams, one per named purpose.
//!
//! Every stream is a ChaCha8 generator keyed by `SHA-256(seed, label)`, so the
//! sequence a stream produces depends only on the family seed and its label.
//! Drawing from one stream never advances another, which is what lets the
//! `M = 0` reductions skip rejection and race draws without shifting the
//! proposal draws that follow.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Observation noise and latent noise for simulated datasets.
pub const DATA_SIM: &str = "data-sim";
/// Particle proposals inside partial rejection control.
pub const PROPOSAL: &str = "proposal";
/// Accept/reject uniforms for partial rejection control.
pub const PRC_UNIFORM: &str = "prc-uniform";
/// Fresh draws for the normalizing-constant estimate.
pub const DELTA: &str = "delta";
/// Categorical proposals of the Bernoulli race (and multinomial resampling).
pub const RACE_CATEGORICAL: &str = "race-categorical";
/// Coin flips of the Bernoulli race.
pub const RACE_COIN: &str = "race-coin";
/// Random dense emission matrices.
pub const EMISSION_INIT: &str = "emission-init";
/// Proposal draws used to learn the rejection-control matrix.
pub const M_TUNE: &str = "m-tune";

/// Every label an experiment family carries.
pub const ALL_LABELS: [&str; 8] = [
    DATA_SIM,
    PROPOSAL,
    PRC_UNIFORM,
    DELTA,
    RACE_CATEGORICAL,
    RACE_COIN,
    EMISSION_INIT,
    M_TUNE,
];

fn derive_key(seed: u64, label: &str, particle: Option<u64>, time: Option<u64>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"vrpf-stream-v1");
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    if let (Some(p), Some(t)) = (particle, time) {
        hasher.update(p.to_le_bytes());
        hasher.update(t.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    key
}

/// A single labelled generator.
#[derive(Clone, Debug)]
pub struct Stream {
    label: String,
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, label: &str) -> Self {
        Self {
            label: label.to_owned(),
            rng: ChaCha8Rng::from_seed(derive_key(seed, label, None, None)),
        }
    }

    /// Sub-stream for `(seed, label, particle, time)`. Pure: derives the same
    /// generator no matter how far the parent stream has advanced.
    pub fn derived(seed: u64, label: &str, particle: u64, time: u64) -> Self {
        Self {
            label: format!("{label}/{particle}/{time}"),
            rng: ChaCha8Rng::from_seed(derive_key(seed, label, Some(particle), Some(time))),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform draw on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Child generator seeded from one draw of this stream. Consumes exactly
    /// one `u64` regardless of how much the child is used later.
    pub fn fork(&mut self) -> Stream {
        let child_seed = self.rng.next_u64();
        Stream {
            label: format!("{}/fork", self.label),
            rng: ChaCha8Rng::seed_from_u64(child_seed),
        }
    }

    /// Fills `out` with i.i.d. standard normal draws.
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }
}

/// A set of independent labelled streams derived from one seed.
#[derive(Clone, Debug)]
pub struct StreamFamily {
    seed: u64,
    streams: BTreeMap<String, Stream>,
}

impl StreamFamily {
    pub fn new<S: AsRef<str>>(seed: u64, labels: &[S]) -> Result<Self> {
        let mut streams = BTreeMap::new();
        for label in labels {
            let label = label.as_ref();
            if streams.insert(label.to_owned(), Stream::new(seed, label)).is_some() {
                return Err(Error::Config(format!("duplicate stream label `{label}`")));
            }
        }
        Ok(Self { seed, streams })
    }

    /// Family carrying every label used by the estimators and experiments.
    pub fn standard(seed: u64) -> Self {
        Self::new(seed, &ALL_LABELS).expect("standard labels are distinct")
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.streams.keys().map(String::as_str)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.streams.contains_key(label)
    }

    pub fn get_mut(&mut self, label: &str) -> Result<&mut Stream> {
        self.streams
            .get_mut(label)
            .ok_or_else(|| Error::UnknownStream(label.to_owned()))
    }

    pub fn draw_uniform(&mut self, label: &str) -> Result<f64> {
        Ok(self.get_mut(label)?.uniform())
    }

    pub fn draw_standard_normal(&mut self, label: &str) -> Result<f64> {
        Ok(self.get_mut(label)?.standard_normal())
    }

    /// Removes a stream so it can be borrowed alongside others; put it back
    /// with [`StreamFamily::restore`].
    pub fn take(&mut self, label: &str) -> Result<Stream> {
        self.streams
            .remove(label)
            .ok_or_else(|| Error::UnknownStream(label.to_owned()))
    }

    pub fn restore(&mut self, stream: Stream) {
        self.streams.insert(stream.label.clone(), stream);
    }
}
