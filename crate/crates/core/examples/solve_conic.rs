//! Solves the return-risk model with AD-LPMM and checks it against the
//! Frank-Wolfe reference.
//!
//! Run with `cargo run --release --example solve_conic`.

use riskmdp::experiments::{gen_random_mdp, gen_reward_truth};
use riskmdp::frank_wolfe::{self, FwConfig};
use riskmdp::models::{base_problem, compile, ModelSpec};
use riskmdp::solver::{self, SolverConfig};

fn main() -> riskmdp::Result<()> {
    let mdp = gen_random_mdp(8, 4, 0.95, 3)?;
    let reward = gen_reward_truth(8, 4, 4)?;
    let spec = ModelSpec::rr(0.5, 1.0, 0.1);
    let prob = compile(&spec, &base_problem(mdp, reward)?)?;
    println!("penalties: a = {:.4}, b = {:.4}", prob.a(), prob.b());

    let ad = solver::solve(&prob, &SolverConfig::default())?;
    println!(
        "AD-LPMM: objective {:.6} after {} iterations (residual {:.1e}, {:?})",
        ad.objective, ad.iterations, ad.residual, ad.elapsed
    );
    let fw = frank_wolfe::solve_conic(&prob, &FwConfig::default())?;
    println!("Frank-Wolfe: objective {:.6} after {} iterations", fw.objective, fw.iterations);
    println!("relative gap {:.2e}", (fw.objective - ad.objective).abs() / fw.objective.abs());

    println!("policy (rows are states):");
    for (s, row) in ad.policy.rows().iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
        println!("  {s}: {}", cells.join(" "));
    }
    Ok(())
}
