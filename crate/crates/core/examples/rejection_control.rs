//! One partial-rejection-control step at a single site: acceptance
//! probabilities for a few values of `M`, the multiplier `c`, and how the
//! accepted draws and the weight estimate change as `M` grows.
//!
//! ```text
//! cargo run --example rejection_control
//! ```

use nalgebra::{DMatrix, DVector};
use vrpf::lgssm::LgssmParams;
use vrpf::prc::{log_of_m, prc_step, PrcSite, DEFAULT_TRIAL_CAP};
use vrpf::proposal::ProposalParams;
use vrpf::rng::{self, Stream};

fn main() -> vrpf::Result<()> {
    let model = LgssmParams::new(DMatrix::from_element(1, 1, 0.42), DMatrix::from_element(1, 1, 1.0))?;
    let phi = ProposalParams::new(vec![0.0], vec![0.5])?;
    let z_prev = DVector::from_element(1, 0.5);
    let x = DVector::from_element(1, 1.2);

    println!("{:>8} {:>10} {:>12} {:>12} {:>12}", "M", "accept", "mean trials", "mean z", "mean w");
    for m in [0.0, 0.1, 1.0, 10.0] {
        let site = PrcSite {
            model: &model,
            phi: &phi,
            z_prev: &z_prev,
            x_t: &x,
            log_m: log_of_m(m)?,
        };
        let (mut proposals, mut uniforms, mut deltas) = (
            Stream::new(3, rng::PROPOSAL),
            Stream::new(3, rng::PRC_UNIFORM),
            Stream::new(3, rng::DELTA),
        );
        let draws = 20_000;
        let (mut trials, mut z_sum, mut w_sum) = (0u64, 0.0, 0.0);
        for i in 0..draws {
            let out = prc_step(&site, 3, &mut proposals, &mut uniforms, &mut deltas, DEFAULT_TRIAL_CAP, (0, i))?;
            trials += out.trials;
            z_sum += out.z[0];
            w_sum += out.w_tilde();
        }
        let n = draws as f64;
        println!(
            "{m:>8} {:>10.4} {:>12.4} {:>12.4} {:>12.5}",
            n / trials as f64,
            trials as f64 / n,
            z_sum / n,
            w_sum / n
        );
    }
    // The weight estimate is unbiased for p(x | z_prev) at every M.
    let evidence = -0.5 * (1.2f64 - 0.42 * 0.5).powi(2) / 2.0 - 0.5 * (2.0 * std::f64::consts::PI * 2.0).ln();
    println!("p(x | z_prev) = {:.5}", evidence.exp());
    Ok(())
}
