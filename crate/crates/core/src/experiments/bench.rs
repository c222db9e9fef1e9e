//! AD-LPMM against the Frank-Wolfe reference on random instances of growing size.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::generators::{gen_random_mdp, gen_reward_truth};
use crate::error::{Error, Result};
use crate::frank_wolfe::{self, FwConfig};
use crate::io::format_number;
use crate::models::{base_problem, compile, ModelSpec};
use crate::solver::{self, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Values of `S = A`.
    pub sizes: Vec<usize>,
    pub alpha: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub seed: u64,
    pub adlpmm: SolverConfig,
    pub fw: FwConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![10, 40, 70],
            alpha: 0.5,
            theta: 2.0,
            epsilon: 0.1,
            gamma: 0.95,
            seed: 1,
            adlpmm: SolverConfig::default(),
            fw: FwConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::invalid("bench sizes must be positive"));
        }
        ModelSpec::rr(self.alpha, self.theta, self.epsilon).validate()?;
        self.adlpmm.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub pairs: usize,
    /// Instance generation plus the eigen-decomposition of the covariance.
    pub setup_seconds: f64,
    pub adlpmm_seconds: f64,
    pub adlpmm_iterations: usize,
    pub adlpmm_converged: bool,
    pub adlpmm_residual: f64,
    pub adlpmm_objective: f64,
    pub fw_seconds: f64,
    pub fw_iterations: usize,
    pub fw_objective: f64,
    /// `|fw - adlpmm| / |fw|`
    pub relative_gap: f64,
}

/// Solves the RR model at `S = A = size` with both methods.
///
/// A time limit on `cfg.adlpmm` bounds setup plus the AD-LPMM run.
pub fn bench_size(size: usize, cfg: &BenchConfig) -> Result<BenchRow> {
    let timer = Instant::now();
    let mdp = gen_random_mdp(size, size, cfg.gamma, cfg.seed)?;
    let reward = gen_reward_truth(size, size, cfg.seed.wrapping_add(1))?;
    let prob = compile(&ModelSpec::rr(cfg.alpha, cfg.theta, cfg.epsilon), &base_problem(mdp, reward)?)?;
    let setup_seconds = timer.elapsed().as_secs_f64();

    // the wall-clock budget covers setup as well
    let mut ad_cfg = cfg.adlpmm.clone();
    ad_cfg.time_limit_seconds = ad_cfg.time_limit_seconds.map(|t| (t - setup_seconds).max(1.0));
    let (ad, converged) = match solver::solve(&prob, &ad_cfg) {
        Ok(r) => (r, true),
        Err(Error::NotConverged { best, .. }) => (*best, false),
        Err(e) => return Err(e),
    };
    let fw = frank_wolfe::solve_conic(&prob, &cfg.fw)?;
    Ok(BenchRow {
        size,
        pairs: size * size,
        setup_seconds,
        adlpmm_seconds: ad.elapsed.as_secs_f64(),
        adlpmm_iterations: ad.iterations,
        adlpmm_converged: converged,
        adlpmm_residual: ad.residual,
        adlpmm_objective: ad.objective,
        fw_seconds: fw.elapsed.as_secs_f64(),
        fw_iterations: fw.iterations,
        fw_objective: fw.objective,
        relative_gap: (fw.objective - ad.objective).abs() / fw.objective.abs(),
    })
}

pub fn solver_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    cfg.sizes.iter().map(|&n| bench_size(n, cfg)).collect()
}

pub const BENCH_HEADER: &str = "size,pairs,setup_seconds,adlpmm_seconds,adlpmm_iterations,adlpmm_converged,adlpmm_residual,adlpmm_objective,fw_seconds,fw_iterations,fw_objective,relative_gap";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = format!("{BENCH_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.size,
            r.pairs,
            format_number(r.setup_seconds),
            format_number(r.adlpmm_seconds),
            r.adlpmm_iterations,
            r.adlpmm_converged,
            format_number(r.adlpmm_residual),
            format_number(r.adlpmm_objective),
            format_number(r.fw_seconds),
            r.fw_iterations,
            format_number(r.fw_objective),
            format_number(r.relative_gap)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sizes_agree() {
        let cfg = BenchConfig {
            sizes: vec![3, 5],
            ..Default::default()
        };
        let rows = solver_bench(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.adlpmm_converged);
            assert!(r.relative_gap < 5e-3, "{r:?}");
        }
        assert_eq!(rows[1].pairs, 25);
        assert_eq!(bench_csv(&rows).lines().count(), 3);
        let again = bench_size(5, &cfg).unwrap();
        assert_eq!(again.adlpmm_objective, rows[1].adlpmm_objective);
        assert_eq!(again.relative_gap, rows[1].relative_gap);
    }
}
