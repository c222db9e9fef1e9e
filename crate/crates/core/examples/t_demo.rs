//! Decision accuracy of VaR and CVaR estimates under heavy-tailed rewards.
//!
//! Run with `cargo run --release --example t_demo`.

use riskmdp::experiments::{t_demo, t_demo_csv, TDemoConfig};

fn main() -> riskmdp::Result<()> {
    let cfg = TDemoConfig {
        n_test: 2000,
        seeds: (0..5).collect(),
        ..Default::default()
    };
    print!("{}", t_demo_csv(&t_demo(&cfg)?));
    Ok(())
}
