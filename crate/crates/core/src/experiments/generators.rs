//! Random instances and ground-truth reward distributions.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::MdpInstance;
use crate::stats::{EllipticalRef, DEFAULT_EIG_FLOOR};

/// Environment plus the true reward distribution.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub mdp: MdpInstance,
    pub reward: EllipticalRef,
}

/// Number of reachable next states, `ceil(ln S)` clamped to `[1, S]`.
pub fn reachable_count(num_states: usize) -> usize {
    ((num_states as f64).ln().ceil() as usize).clamp(1, num_states)
}

/// Sparse random kernel: each pair reaches `ceil(ln S)` distinct states with
/// normalized uniform weights. Uniform initial distribution.
pub fn gen_random_mdp(num_states: usize, num_actions: usize, gamma: f64, seed: u64) -> Result<MdpInstance> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::invalid("need at least one state and one action"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = reachable_count(num_states);
    let mut kernel = vec![0.0; num_states * num_actions * num_states];
    for pair in 0..num_states * num_actions {
        let targets = sample(&mut rng, num_states, k);
        let weights: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        let row = &mut kernel[pair * num_states..(pair + 1) * num_states];
        if total > 0.0 {
            for (t, w) in targets.iter().zip(&weights) {
                row[t] = w / total;
            }
        } else {
            row[targets.index(0)] = 1.0;
        }
        // renormalize so the row sums to one up to rounding of a single pass
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
    }
    MdpInstance::from_flat(
        num_states,
        num_actions,
        gamma,
        vec![1.0 / num_states as f64; num_states],
        kernel,
    )
}

/// Clamped bimodal means and standard deviations, one per pair.
fn draw_marginals(n: usize, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
    let low_mean = Normal::new(50.0, 10.0).expect("valid normal");
    let high_mean = Normal::new(90.0, 10.0).expect("valid normal");
    let low_sd = Normal::new(3.0, 3.0).expect("valid normal");
    let high_sd = Normal::new(18.0, 3.0).expect("valid normal");
    let mut mean = DVector::zeros(n);
    let mut sd = DVector::zeros(n);
    for i in 0..n {
        let m: f64 = if rng.gen::<bool>() {
            low_mean.sample(rng)
        } else {
            high_mean.sample(rng)
        };
        let s: f64 = if rng.gen::<bool>() {
            low_sd.sample(rng)
        } else {
            high_sd.sample(rng)
        };
        mean[i] = m.max(0.0);
        sd[i] = s.max(0.0);
    }
    (mean, sd)
}

/// Reward truth over `S * A` pairs: bimodal means and standard deviations,
/// positively correlated through a normalized Gram matrix of uniform draws.
pub fn gen_reward_truth(num_states: usize, num_actions: usize, seed: u64) -> Result<EllipticalRef> {
    let n = num_states * num_actions;
    if n == 0 {
        return Err(Error::invalid("need at least one state-action pair"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mean, sd) = draw_marginals(n, &mut rng);
    let r = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.25..=1.0));
    let gram = linalg::gram(&r);
    let d: Vec<f64> = (0..n).map(|i| 1.0 / gram[(i, i)].sqrt()).collect();
    let scale: Vec<f64> = (0..n).map(|i| sd[i] * d[i]).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let (i, j) = (i.min(j), i.max(j));
        scale[i] * scale[j] * gram[(i, j)]
    });
    EllipticalRef::with_floor(mean, cov, DEFAULT_EIG_FLOOR)
}

/// Independent Gaussian reward profile of the machine-replacement problem.
///
/// Not the published figure: those numbers exist only as an image. The
/// default stand-in keeps the qualitative shape: operating is free and
/// nearly deterministic until the last two wear levels, where it becomes
/// expensive and highly uncertain, while repairing costs a moderate amount
/// with little noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardProfile {
    pub operate_mean: Vec<f64>,
    pub operate_std: Vec<f64>,
    pub repair_mean: Vec<f64>,
    pub repair_std: Vec<f64>,
}

impl RewardProfile {
    pub fn stand_in(num_states: usize) -> Self {
        let mut operate_mean = vec![0.0; num_states];
        let mut operate_std = vec![0.1; num_states];
        if num_states >= 2 {
            operate_mean[num_states - 2] = -10.0;
            operate_std[num_states - 2] = 8.0;
        }
        operate_mean[num_states - 1] = -100.0;
        operate_std[num_states - 1] = 20.0;
        Self {
            operate_mean,
            operate_std,
            repair_mean: vec![-13.0; num_states],
            repair_std: vec![1.0; num_states],
        }
    }

    fn check(&self, num_states: usize) -> Result<()> {
        let lens = [
            self.operate_mean.len(),
            self.operate_std.len(),
            self.repair_mean.len(),
            self.repair_std.len(),
        ];
        if lens.iter().any(|&l| l != num_states) {
            return Err(Error::invalid(format!(
                "reward profile lengths {lens:?} do not match {num_states} states"
            )));
        }
        if self.operate_std.iter().chain(&self.repair_std).any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("reward profile standard deviations must be >= 0"));
        }
        Ok(())
    }
}

/// Wear-level chain: action 0 operates (`s -> min(s + 1, S - 1)`), action 1
/// repairs (`s -> 0`). Uniform initial distribution.
pub fn gen_machine_replacement(num_states: usize, gamma: f64, profile: &RewardProfile) -> Result<GroundTruth> {
    if num_states == 0 {
        return Err(Error::invalid("need at least one wear level"));
    }
    profile.check(num_states)?;
    let na = 2;
    let mut kernel = vec![0.0; num_states * na * num_states];
    let mut mean = DVector::zeros(num_states * na);
    let mut var = DVector::zeros(num_states * na);
    for s in 0..num_states {
        let operate = s * na;
        let repair = s * na + 1;
        kernel[operate * num_states + (s + 1).min(num_states - 1)] = 1.0;
        kernel[repair * num_states] = 1.0;
        mean[operate] = profile.operate_mean[s];
        mean[repair] = profile.repair_mean[s];
        var[operate] = profile.operate_std[s].powi(2);
        var[repair] = profile.repair_std[s].powi(2);
    }
    let mdp = MdpInstance::from_flat(num_states, na, gamma, vec![1.0 / num_states as f64; num_states], kernel)?;
    let reward = EllipticalRef::with_floor(mean, DMatrix::from_diagonal(&var), DEFAULT_EIG_FLOOR)?;
    Ok(GroundTruth { mdp, reward })
}
