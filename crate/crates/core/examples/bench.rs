//! AD-LPMM against the Frank-Wolfe reference at a few sizes.
//!
//! Run with `cargo run --release --example bench`.

use riskmdp::experiments::{bench_csv, solver_bench, BenchConfig};

fn main() -> riskmdp::Result<()> {
    let mut cfg = BenchConfig {
        sizes: vec![5, 10, 15],
        ..Default::default()
    };
    cfg.adlpmm.time_limit_seconds = Some(60.0);
    print!("{}", bench_csv(&solver_bench(&cfg)?));
    Ok(())
}
