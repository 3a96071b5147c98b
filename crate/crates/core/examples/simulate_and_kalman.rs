//! Builds a two-dimensional model, simulates ten observations and prints the
//! exact log-marginal likelihood from the Kalman filter.
//!
//! ```text
//! cargo run --example simulate_and_kalman
//! ```

use vrpf::lgssm::{kalman_filter, simulate, EmissionKind, LgssmParams};
use vrpf::rng::{self, Stream};

fn main() -> vrpf::Result<()> {
    let seed = 1;
    let mut init = Stream::new(seed, rng::EMISSION_INIT);
    let model = LgssmParams::from_alpha(0.42, 2, 2, EmissionKind::Dense, &mut init)?;
    let data = simulate(&model, 10, &mut Stream::new(seed, rng::DATA_SIM))?;

    println!("A =\n{}C =\n{}", model.transition, model.emission);
    let out = kalman_filter(&model, &data.observations)?;
    for (t, (x, lp)) in data.observations.iter().zip(&out.step_log_predictive).enumerate() {
        println!("t={:2}  x=({:+.3}, {:+.3})  log p(x_t | x_<t) = {lp:.4}", t + 1, x[0], x[1]);
    }
    println!("log p(x_1:T) = {:.6}", out.log_marginal);
    Ok(())
}
