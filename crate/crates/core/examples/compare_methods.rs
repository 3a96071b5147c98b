//! A small version of the method comparison: the rejection-controlled filter
//! at two target acceptance rates against plain filters with a matching
//! proposal budget, each trained under a few seeds and evaluated on fresh
//! replications. Outputs go to `out/compare-example`.
//!
//! ```text
//! cargo run --release --example compare_methods
//! ```

use vrpf::experiment::{cmd_compare, ExperimentConfig};

fn main() -> vrpf::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.model.d_z = 2;
    cfg.model.d_x = 2;
    cfg.training.epochs = 200;
    cfg.compare.seeds = 3;
    cfg.compare.eval_reps = 200;
    cfg.out = "out/compare-example".into();

    let cmp = cmd_compare(&cfg)?;
    println!("Kalman log p(x) = {:.4}", cmp.kalman_log_marginal);
    for m in &cmp.methods {
        println!(
            "{:<16} N={:<3} bound {:>9.4} +- {:.4}  acceptance {:.3}",
            m.method.name, m.method.n, m.mean_bound, m.se_bound, m.mean_acceptance_rate
        );
    }
    println!("wrote {}", cfg.out.display());
    Ok(())
}
