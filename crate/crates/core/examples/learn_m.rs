//! Learning the rejection constants from quantiles of `log q - log p` and the
//! acceptance rates they produce, per particle and shared across particles.
//!
//! ```text
//! cargo run --release --example learn_m
//! ```

use vrpf::bounds::vrpf_estimate;
use vrpf::experiment::replication_seed;
use vrpf::lgssm::{simulate, EmissionKind, LgssmParams};
use vrpf::proposal::ProposalParams;
use vrpf::rng::{self, Stream, StreamFamily};
use vrpf::schedule::{MMode, MSchedule};
use vrpf::training::learn_schedule;

fn main() -> vrpf::Result<()> {
    let mut init = Stream::new(2, rng::EMISSION_INIT);
    let model = LgssmParams::from_alpha(0.42, 1, 1, EmissionKind::Dense, &mut init)?;
    let data = simulate(&model, 10, &mut Stream::new(2, rng::DATA_SIM))?;
    let phi = ProposalParams::prior(1);

    // M is learned at the particles of a run without rejection control.
    let (_, pilot) = vrpf_estimate(&model, &phi, &data, 4, 1, &MSchedule::zero(), None, &mut StreamFamily::standard(5))?;

    println!("{:>6} {:>16} {:>16}", "gamma", "per-particle", "shared");
    for gamma in [0.2, 0.4, 0.8] {
        let mut rates = Vec::new();
        for mode in [MMode::PerParticle, MMode::SharedPerTime] {
            let schedule = learn_schedule(&model, &phi, &data, &pilot, gamma, 64, mode, &mut Stream::new(6, rng::M_TUNE))?;
            let reps = 500;
            let mut total = 0.0;
            for r in 0..reps {
                let mut s = StreamFamily::standard(replication_seed(7, r));
                total += vrpf_estimate(&model, &phi, &data, 4, 3, &schedule, Some(gamma), &mut s)?.0.acceptance_rate;
            }
            rates.push(total / reps as f64);
        }
        println!("{gamma:>6} {:>16.4} {:>16.4}", rates[0], rates[1]);
    }
    Ok(())
}
