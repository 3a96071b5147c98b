//! The pathwise gradient of one recorded run, with accepted particles and
//! ancestors held fixed, against central differences of the same run
//! replayed at perturbed parameters.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use vrpf::bounds::{replay_bound, vrpf_estimate};
use vrpf::lgssm::{simulate, EmissionKind, LgssmParams};
use vrpf::proposal::ProposalParams;
use vrpf::rng::{self, Stream, StreamFamily};
use vrpf::schedule::MSchedule;
use vrpf::training::{finite_difference_gradient, pathwise_gradient_of_system};

fn main() -> vrpf::Result<()> {
    let mut init = Stream::new(4, rng::EMISSION_INIT);
    let model = LgssmParams::from_alpha(0.42, 2, 2, EmissionKind::Dense, &mut init)?;
    let data = simulate(&model, 5, &mut Stream::new(4, rng::DATA_SIM))?;
    let phi = ProposalParams::new(vec![0.1, -0.2], vec![0.3, -0.1])?;
    let schedule = MSchedule::constant(0.8)?;

    let (report, system) = vrpf_estimate(&model, &phi, &data, 3, 3, &schedule, None, &mut StreamFamily::standard(2))?;
    let analytic = pathwise_gradient_of_system(&model, &phi, &data, &system).to_vec();
    let numeric = finite_difference_gradient(
        |x| match ProposalParams::from_slice(x) {
            Ok(p) => replay_bound(&model, &p, &data, &system),
            Err(_) => f64::NAN,
        },
        &phi.to_vec(),
        1e-4,
    )?;

    println!("bound {:.6}", report.bound);
    println!("{:>12} {:>14} {:>14}", "parameter", "pathwise", "central diff");
    let names = ["mu[0]", "mu[1]", "log_var[0]", "log_var[1]"];
    for ((name, a), n) in names.iter().zip(&analytic).zip(&numeric) {
        println!("{name:>12} {a:>14.8} {n:>14.8}");
    }
    Ok(())
}
