//! Machine replacement: the risk-neutral policy keeps operating into the
//! risky wear levels, a return-risk policy repairs earlier.
//!
//! Run with `cargo run --release --example machine_replacement`.

use riskmdp::experiments::{gen_machine_replacement, RewardProfile};
use riskmdp::models::{base_problem, evaluate_policy_true, solve_model, Metric, ModelSpec, SolverChoice};

fn main() -> riskmdp::Result<()> {
    let states = 20;
    // operating at the three highest wear levels is cheap on average but volatile
    let mut profile = RewardProfile::stand_in(states);
    for s in states - 4..states - 1 {
        profile.operate_mean[s] = -1.0;
        profile.operate_std[s] = 40.0;
    }
    let truth = gen_machine_replacement(states, 0.8, &profile)?;
    let base = base_problem(truth.mdp.clone(), truth.reward.clone())?;
    let choice = SolverChoice::frank_wolfe();
    for spec in [ModelSpec::nominal(), ModelSpec::cc(0.05), ModelSpec::rr(0.5, 0.5, 0.05)] {
        let res = solve_model(&spec, &base, None, &choice)?;
        let m = evaluate_policy_true(&res.x.clamped(), &truth.reward, &[Metric::Mean, Metric::Var(0.1)])?;
        // action 1 is repair
        let repair: Vec<String> = res.policy.rows().iter().map(|r| format!("{:.0}", r[1].round())).collect();
        println!(
            "{:<8} mean {:>9.4}  var@0.1 {:>9.4}  repair by wear level: {}",
            spec.kind.name(),
            m[0].1,
            m[1].1,
            repair.join("")
        );
    }
    Ok(())
}
