//! Bernoulli-race ancestor sampling with coins of known success probability:
//! the empirical ancestor law against `c Z / sum(c Z)` and the number of
//! rounds against its geometric mean.
//!
//! ```text
//! cargo run --example bernoulli_race
//! ```

use vrpf::resample::{bernoulli_race, Categorical, DEFAULT_RACE_CAP};
use vrpf::rng::{self, Stream};

fn main() -> vrpf::Result<()> {
    let c = [0.5, 2.0, 1.2];
    let z = [0.9, 0.15, 0.4];
    let proposal = Categorical::from_weights(&c)?;
    let mut categorical = Stream::new(1, rng::RACE_CATEGORICAL);
    let mut coins = Stream::new(1, rng::RACE_COIN);

    let draws = 100_000;
    let mut counts = [0usize; 3];
    let mut rounds = 0u64;
    for _ in 0..draws {
        let out = bernoulli_race(&proposal, |i| coins.uniform() < z[i], &mut categorical, DEFAULT_RACE_CAP, 0)?;
        counts[out.ancestor] += 1;
        rounds += out.iterations;
    }

    let total: f64 = c.iter().zip(&z).map(|(a, b)| a * b).sum();
    for i in 0..3 {
        println!(
            "ancestor {i}: empirical {:.4}  target {:.4}",
            counts[i] as f64 / draws as f64,
            c[i] * z[i] / total
        );
    }
    let expected = c.iter().sum::<f64>() / total;
    println!("mean rounds {:.4}, expected {expected:.4}", rounds as f64 / draws as f64);
    Ok(())
}
