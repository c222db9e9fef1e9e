//! One-state, two-action comparison of VaR and CVaR estimation under
//! Student-t rewards.
//!
//! Arm 1 pays `t(dof)`, arm 2 pays an independent `t(dof)` shifted up by
//! `rho |s|`, with `s` the true VaR (or CVaR) of arm 1. Each test draws
//! `n_train` samples per arm and picks the arm with the larger estimate; the
//! accuracy is the fraction of tests that pick arm 2.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::format_number;
use crate::stats::{empirical_var_cvar, t_cvar, t_var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TDemoConfig {
    pub dofs: Vec<f64>,
    pub shifts: Vec<f64>,
    pub epsilon: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
}

impl Default for TDemoConfig {
    fn default() -> Self {
        Self {
            dofs: vec![2.0, 3.0, 4.0],
            shifts: vec![0.05, 0.1, 0.15, 0.2, 0.25],
            epsilon: 0.1,
            n_train: 1000,
            n_test: 10_000,
            seeds: (0..20).collect(),
        }
    }
}

impl TDemoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dofs.iter().any(|&d| !(d > 1.0)) {
            return Err(Error::invalid("degrees of freedom must exceed 1"));
        }
        if self.shifts.iter().any(|&r| !(r >= 0.0)) {
            return Err(Error::invalid("shift ratios must be >= 0"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::invalid("epsilon must lie in (0, 0.5)"));
        }
        if self.n_train == 0 || self.n_test == 0 || self.seeds.is_empty() {
            return Err(Error::invalid("need samples, tests and at least one seed"));
        }
        Ok(())
    }
}

/// Accuracy of one `(dof, shift)` cell, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TDemoRow {
    pub dof: f64,
    pub shift: f64,
    pub var_accuracy: f64,
    pub cvar_accuracy: f64,
    /// Per-seed accuracies, in seed order.
    pub var_by_seed: Vec<f64>,
    pub cvar_by_seed: Vec<f64>,
}

/// `(VaR accuracy, CVaR accuracy)` of one seed. Both comparisons read the
/// same draws.
pub fn t_demo_accuracy(dof: f64, shift: f64, epsilon: f64, n_train: usize, n_test: usize, seed: u64) -> Result<(f64, f64)> {
    let law = StudentT::new(dof).map_err(|e| Error::domain(format!("Student t: {e}")))?;
    let var_gap = shift * t_var(dof, epsilon)?.abs();
    let cvar_gap = shift * t_cvar(dof, epsilon)?.abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = vec![0.0; n_train];
    let mut second = vec![0.0; n_train];
    let (mut var_hits, mut cvar_hits) = (0usize, 0usize);
    for _ in 0..n_test {
        first.iter_mut().for_each(|v| *v = law.sample(&mut rng));
        second.iter_mut().for_each(|v| *v = law.sample(&mut rng));
        let (v1, c1) = empirical_var_cvar(&first, epsilon)?;
        let (v2, c2) = empirical_var_cvar(&second, epsilon)?;
        // shifting every sample shifts both estimates by the same amount
        var_hits += usize::from(v2 + var_gap > v1);
        cvar_hits += usize::from(c2 + cvar_gap > c1);
    }
    Ok((var_hits as f64 / n_test as f64, cvar_hits as f64 / n_test as f64))
}

/// The full accuracy grid, dof-major.
pub fn t_demo(cfg: &TDemoConfig) -> Result<Vec<TDemoRow>> {
    cfg.validate()?;
    let cells: Vec<(f64, f64)> = cfg
        .dofs
        .iter()
        .flat_map(|&d| cfg.shifts.iter().map(move |&r| (d, r)))
        .collect();
    cells
        .iter()
        .map(|&(dof, shift)| {
            let per_seed = cfg
                .seeds
                .par_iter()
                .map(|&seed| t_demo_accuracy(dof, shift, cfg.epsilon, cfg.n_train, cfg.n_test, seed))
                .collect::<Result<Vec<_>>>()?;
            let k = per_seed.len() as f64;
            let var_by_seed: Vec<f64> = per_seed.iter().map(|p| p.0).collect();
            let cvar_by_seed: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
            Ok(TDemoRow {
                dof,
                shift,
                var_accuracy: var_by_seed.iter().sum::<f64>() / k,
                cvar_accuracy: cvar_by_seed.iter().sum::<f64>() / k,
                var_by_seed,
                cvar_by_seed,
            })
        })
        .collect()
}

/// `dof,shift,var_accuracy,cvar_accuracy` table.
pub fn t_demo_csv(rows: &[TDemoRow]) -> String {
    let mut s = String::from("dof,shift,var_accuracy,cvar_accuracy\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            format_number(r.dof),
            format_number(r.shift),
            format_number(r.var_accuracy),
            format_number(r.cvar_accuracy)
        ));
    }
    s
}
