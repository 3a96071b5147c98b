//! The file-based workflow the `vrpf` binary drives: simulate a dataset to
//! disk, then estimate and train against the saved copy. Each step writes
//! `config.json` and CSVs that start with a `# config:` line.
//!
//! ```text
//! cargo run --example file_workflow
//! ```

use vrpf::experiment::{cmd_estimate, cmd_simulate, cmd_train, ExperimentConfig};

fn main() -> vrpf::Result<()> {
    let root = std::path::PathBuf::from("out/workflow-example");
    let mut cfg = ExperimentConfig::default();

    cfg.out = root.join("data");
    let meta = cmd_simulate(&cfg)?;
    println!("dataset: T={} exact log p(x) = {:.4}", meta.steps, meta.kalman_log_marginal);

    cfg.data.path = Some(root.join("data"));
    cfg.out = root.join("estimate");
    cfg.estimator.gamma = Some(0.4);
    cfg.reps = 50;
    let summary = cmd_estimate(&cfg)?;
    println!("{}\n{}", vrpf::experiment::EstimateSummary::csv_header(), summary.csv_row());

    cfg.out = root.join("train");
    cfg.training.epochs = 100;
    cfg.training.checkpoint_every = 50;
    let out = cmd_train(&cfg)?;
    println!("trained proposal: {}", serde_json::to_string(&out.phi)?);
    Ok(())
}
