//! Adjusted risk thresholds for a range of Wasserstein radii.
//!
//! Run with `cargo run --example calibrate`.

use riskmdp::calibration::{
    calibrate_optimistic, calibrate_pessimistic, optimistic_theta_limit, theta_of_pessimistic, RiskSpec, DEFAULT_TOL,
};

fn main() -> riskmdp::Result<()> {
    for eps in [0.05, 0.1, 0.15] {
        println!("eps = {eps}");
        println!("  theta   pessimistic   optimistic");
        let limit = optimistic_theta_limit(eps)?;
        for theta in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
            let spec = RiskSpec::new(eps, theta)?;
            let low = calibrate_pessimistic(&spec, DEFAULT_TOL)?.threshold;
            let high = if theta < limit {
                format!("{:.6}", calibrate_optimistic(&spec, DEFAULT_TOL)?.threshold)
            } else {
                "-".into()
            };
            println!("  {theta:5.2}   {low:.6}      {high}");
        }
        // and back: which radius halves the threshold?
        let theta = theta_of_pessimistic(eps, eps / 2.0)?;
        println!("  radius giving eps/2: {theta:.6}");
    }
    Ok(())
}
