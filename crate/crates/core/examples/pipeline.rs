//! A small data-driven experiment: sample rewards, cross-validate each
//! model's parameters and score the chosen policies under the truth.
//!
//! Run with `cargo run --release --example pipeline`.

use riskmdp::experiments::{run_pipeline, ExperimentConfig};
use riskmdp::models::{Metric, ModelKind};

fn main() -> riskmdp::Result<()> {
    let cfg = ExperimentConfig {
        sample_sizes: vec![50, 200],
        repetitions: 5,
        num_states: Some(6),
        num_actions: Some(4),
        master_seed: 9,
        ..Default::default()
    };
    let out = run_pipeline(&cfg)?;
    print!("{}", out.summary_csv());
    for kind in [ModelKind::CC, ModelKind::DRMDP, ModelKind::DCC, ModelKind::RR] {
        let v = out.median(200, kind, Metric::Var(0.15)).unwrap_or(f64::NAN);
        println!("median var@0.15 at n=200, {}: {v:.4}", kind.name());
    }
    Ok(())
}
