//! Trains the proposal by gradient ascent on the rejection-controlled bound,
//! re-learning `M` every ten epochs, and prints the trace every fifty epochs.
//!
//! ```text
//! cargo run --release --example train_proposal
//! ```

use vrpf::lgssm::{kalman_logmarginal, simulate, EmissionKind, LgssmParams};
use vrpf::proposal::ProposalParams;
use vrpf::rng::{self, Stream, StreamFamily};
use vrpf::training::{optimize, TrainConfig};

fn main() -> vrpf::Result<()> {
    let mut init = Stream::new(3, rng::EMISSION_INIT);
    let model = LgssmParams::from_alpha(0.42, 1, 1, EmissionKind::Dense, &mut init)?;
    let data = simulate(&model, 10, &mut Stream::new(3, rng::DATA_SIM))?;
    let cfg = TrainConfig::default();

    let out = optimize(&model, &data, &ProposalParams::prior(1), &cfg, &mut StreamFamily::standard(1))?;
    println!("Kalman log p(x) = {:.4}", kalman_logmarginal(&model, &data.observations)?);
    println!("{:>6} {:>10} {:>10} {:>8} {:>8} {:>8}", "epoch", "bound", "|grad|", "accept", "mu", "log_var");
    for row in out.trace.rows.iter().filter(|r| r.epoch % 50 == 0 || r.epoch + 1 == cfg.epochs) {
        println!(
            "{:>6} {:>10.4} {:>10.4} {:>8.3} {:>8.4} {:>8.4}",
            row.epoch, row.bound, row.grad_norm, row.acceptance_rate, row.mu[0], row.log_var[0]
        );
    }
    if let Some(reason) = out.trace.aborted {
        println!("stopped early: {reason}");
    }
    Ok(())
}
