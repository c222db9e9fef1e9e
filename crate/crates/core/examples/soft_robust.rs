//! Soft-robust model over sampled transition kernels: exhaustive search over
//! deterministic policies and the McCormick tightness check.
//!
//! Run with `cargo run --release --example soft_robust`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskmdp::experiments::{gen_random_mdp, gen_reward_truth};
use riskmdp::mdp::{MdpInstance, Policy};
use riskmdp::models::{
    coefficients, enumeration_size, mccormick_exactness_check, policy_actions, solve_soft_robust_det, ModelSpec,
};

fn main() -> riskmdp::Result<()> {
    let (ns, na, gamma) = (4, 3, 0.9);
    let template = gen_random_mdp(ns, na, gamma, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // perturb the template kernel to get N equally likely scenarios
    let scenarios: Vec<(f64, MdpInstance)> = (0..6)
        .map(|_| {
            let mut kernel = template.flat_kernel().to_vec();
            for row in kernel.chunks_mut(ns) {
                row.iter_mut().for_each(|p| *p += 0.2 * rng.gen::<f64>());
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= total);
            }
            Ok((1.0 / 6.0, template.with_kernel(kernel)?))
        })
        .collect::<riskmdp::Result<_>>()?;
    let reward = gen_reward_truth(ns, na, 7)?;
    let (a, b) = coefficients(&ModelSpec::rr(0.5, 0.5, 0.1), ns * na)?;

    for (psi, iota) in [(1.0, 0.0), (0.5, 0.8), (0.0, 0.8)] {
        let (policy, value) = solve_soft_robust_det(&scenarios, psi, iota, a, b, &reward)?;
        println!("psi {psi}, iota {iota}: actions {:?}, value {value:.4}", policy.actions().unwrap());
    }

    let count = enumeration_size(ns, na)?;
    let mut tight = 0;
    for i in 0..count {
        let pi = Policy::deterministic(&policy_actions(i, ns, na), na)?;
        tight += usize::from(mccormick_exactness_check(&pi, &scenarios, gamma)?);
    }
    println!("McCormick envelopes hold for {tight} of {count} deterministic policies");
    Ok(())
}
