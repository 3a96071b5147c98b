//! Variational rejection particle filtering on linear Gaussian state-space
//! models.
//!
//! A particle filter whose proposals pass through partial rejection control
//! before weighting, with ancestors drawn by a Bernoulli race so the
//! marginal-likelihood estimate stays unbiased. The crate provides the
//! filter and its lower bound, the plain-filter, importance-weighted and
//! single-sample bounds it reduces to, an exact Kalman-filter reference, the
//! gradient of the bound with respect to the proposal, quantile-based
//! learning of the rejection constants, and a training loop.
//!
//! ```
//! use vrpf::{lgssm, proposal::ProposalParams, rng::{self, Stream, StreamFamily}, schedule::MSchedule};
//!
//! let mut init = Stream::new(1, rng::EMISSION_INIT);
//! let model = lgssm::LgssmParams::from_alpha(0.42, 1, 1, lgssm::EmissionKind::Dense, &mut init).unwrap();
//! let data = lgssm::simulate(&model, 5, &mut Stream::new(1, rng::DATA_SIM)).unwrap();
//! let phi = ProposalParams::prior(1);
//! let mut streams = StreamFamily::standard(7);
//! let schedule = MSchedule::constant(1.0).unwrap();
//! let (report, _) = vrpf::bounds::vrpf_estimate(&model, &phi, &data, 4, 3, &schedule, None, &mut streams).unwrap();
//! let exact = lgssm::kalman_logmarginal(&model, &data.observations).unwrap();
//! assert!(report.bound.is_finite() && exact.is_finite());
//! ```

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod lgssm;
pub mod math;
pub mod prc;
pub mod proposal;
pub mod resample;
pub mod rng;
pub mod schedule;
pub mod training;

pub use bounds::{BoundReport, Estimator, ParticleSystem, Resampling};
pub use error::{Error, Result};
pub use lgssm::{Dataset, EmissionKind, LgssmParams};
pub use proposal::ProposalParams;
pub use rng::{Stream, StreamFamily};
pub use schedule::{MMode, MSchedule};
