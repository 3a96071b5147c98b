//! Replicated estimates of the rejection-controlled bound next to the plain
//! particle filter, importance-weighted and single-sample bounds, all against
//! the exact Kalman log-marginal.
//!
//! ```text
//! cargo run --release --example estimate_bounds
//! ```

use vrpf::bounds::{elbo_estimate, fivo_estimate, iwae_estimate, vrpf_estimate, Resampling};
use vrpf::experiment::replication_seed;
use vrpf::lgssm::{kalman_logmarginal, simulate, EmissionKind, LgssmParams};
use vrpf::proposal::ProposalParams;
use vrpf::rng::{self, Stream, StreamFamily};
use vrpf::schedule::MSchedule;

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn main() -> vrpf::Result<()> {
    let mut init = Stream::new(1, rng::EMISSION_INIT);
    let model = LgssmParams::from_alpha(0.42, 2, 2, EmissionKind::Dense, &mut init)?;
    let data = simulate(&model, 10, &mut Stream::new(1, rng::DATA_SIM))?;
    let exact = kalman_logmarginal(&model, &data.observations)?;
    let phi = ProposalParams::prior(2);
    let reps = 1000;

    let run = |f: &dyn Fn(&mut StreamFamily) -> vrpf::Result<f64>| -> vrpf::Result<(f64, f64)> {
        let xs = (0..reps)
            .map(|r| f(&mut StreamFamily::standard(replication_seed(9, r))))
            .collect::<vrpf::Result<Vec<_>>>()?;
        Ok(mean_se(&xs))
    };

    println!("Kalman log p(x)           {exact:.4}");
    for m in [0.5, 2.0] {
        let schedule = MSchedule::constant(m)?;
        let (mean, se) = run(&|s| Ok(vrpf_estimate(&model, &phi, &data, 4, 3, &schedule, None, s)?.0.bound))?;
        println!("rejection-controlled M={m:<3} {mean:.4} +- {se:.4}");
    }
    let (mean, se) = run(&|s| Ok(fivo_estimate(&model, &phi, &data, 4, Resampling::EveryStep, s)?.bound))?;
    println!("particle filter           {mean:.4} +- {se:.4}");
    let (mean, se) = run(&|s| Ok(fivo_estimate(&model, &phi, &data, 4, Resampling::EssBelow(0.5), s)?.bound))?;
    println!("particle filter, ESS<N/2  {mean:.4} +- {se:.4}");
    let (mean, se) = run(&|s| Ok(iwae_estimate(&model, &phi, &data, 4, s)?.bound))?;
    println!("importance weighted       {mean:.4} +- {se:.4}");
    let (mean, se) = run(&|s| Ok(elbo_estimate(&model, &phi, &data, s)?.bound))?;
    println!("single sample             {mean:.4} +- {se:.4}");
    Ok(())
}
