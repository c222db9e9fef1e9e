//! Every conic model on one instance, plus BROIL on sampled rewards, scored
//! under the true reward distribution.
//!
//! Run with `cargo run --release --example models`.

use riskmdp::experiments::{gen_random_mdp, gen_reward_truth};
use riskmdp::models::{
    base_problem, evaluate_policy_true, solve_model, Metric, ModelSpec, SolverChoice,
};
use riskmdp::stats::sample_mvn;

fn main() -> riskmdp::Result<()> {
    let mdp = gen_random_mdp(10, 10, 0.95, 11)?;
    let truth = gen_reward_truth(10, 10, 12)?;
    let samples = sample_mvn(&truth, 200, 13)?;
    let base = base_problem(mdp, truth.clone())?;
    let choice = SolverChoice::frank_wolfe();
    let specs = [
        ModelSpec::nominal(),
        ModelSpec::cc(0.1),
        ModelSpec::drmdp(4.0),
        ModelSpec::dcc(0.5, 0.1),
        ModelSpec::rr(0.5, 0.5, 0.1),
        ModelSpec::optimistic_cc(0.1, 0.1),
        ModelSpec::rmdp_static(None),
        ModelSpec::broil(0.5, 0.1),
    ];
    let metrics = [Metric::Mean, Metric::Var(0.1), Metric::Cvar(0.1)];
    println!("{:<14} {:>12} {:>12} {:>12}", "model", "mean", "var@0.1", "cvar@0.1");
    for spec in &specs {
        let res = solve_model(spec, &base, Some(&samples), &choice)?;
        let scores = evaluate_policy_true(&res.x.clamped(), &truth, &metrics)?;
        print!("{:<14}", spec.kind.name());
        for (_, v) in scores {
            print!(" {v:>12.4}");
        }
        println!();
    }
    Ok(())
}
