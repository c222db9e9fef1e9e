//! Parameter selection on a single train/holdout split.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calibration::{optimistic_theta_limit, theta_of_pessimistic};
use crate::error::{Error, Result};
use crate::models::{evaluate_policy_empirical, solve_model, Metric, ModelKind, ModelSpec, SolverChoice};
use crate::solver::{ConicProblem, SolveResult};
use crate::stats::{estimate_moments, SampleMatrix, DEFAULT_EIG_FLOOR};

/// Candidate radii of the distributionally robust model.
pub const THETA_GRID: [f64; 10] = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0];
pub const ALPHA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const BROIL_LAMBDA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const BROIL_EPSILON_GRID: [f64; 3] = [0.05, 0.1, 0.15];

/// `{i eps / 5 : i = 1..5}`
pub fn fraction_grid(eps: f64) -> Vec<f64> {
    (1..=5).map(|i| i as f64 * eps / 5.0).collect()
}

/// Default candidates of `kind` when the target risk level is `eps`.
///
/// Radii of the chance-constrained models come from the adjusted threshold:
/// the calibrated level sweeps `{i eps / 5}` rather than the radius itself.
pub fn default_grid(kind: ModelKind, eps: f64) -> Result<Vec<ModelSpec>> {
    let lower_levels = || -> Result<Vec<f64>> {
        fraction_grid(eps)
            .into_iter()
            .map(|target| theta_of_pessimistic(eps, target))
            .collect()
    };
    Ok(match kind {
        ModelKind::Nominal => vec![ModelSpec::nominal()],
        ModelKind::CC => fraction_grid(eps).into_iter().map(ModelSpec::cc).collect(),
        ModelKind::DRMDP => THETA_GRID.iter().map(|&t| ModelSpec::drmdp(t)).collect(),
        ModelKind::DCC => lower_levels()?.into_iter().map(|t| ModelSpec::dcc(t, eps)).collect(),
        ModelKind::RR => {
            let thetas = lower_levels()?;
            ALPHA_GRID
                .iter()
                .flat_map(|&a| thetas.iter().map(move |&t| ModelSpec::rr(a, t, eps)))
                .collect()
        }
        ModelKind::OptimisticCC => {
            let limit = optimistic_theta_limit(eps)?;
            (0..5)
                .map(|i| ModelSpec::optimistic_cc(i as f64 / 5.0 * limit, eps))
                .collect()
        }
        ModelKind::RmdpStatic => vec![ModelSpec::rmdp_static(None)],
        ModelKind::Broil => BROIL_LAMBDA_GRID
            .iter()
            .flat_map(|&l| BROIL_EPSILON_GRID.iter().map(move |&e| ModelSpec::broil(l, e)))
            .collect(),
        ModelKind::SoftRobustDet => {
            return Err(Error::invalid("the soft-robust model has no default grid"));
        }
    })
}

/// Solves, falling back to the best iterate when the solver runs out of
/// iterations.
pub fn solve_lenient(
    spec: &ModelSpec,
    base: &ConicProblem,
    samples: Option<&SampleMatrix>,
    choice: &SolverChoice,
) -> Result<SolveResult> {
    match solve_model(spec, base, samples, choice) {
        Err(Error::NotConverged { best, .. }) => Ok(*best),
        other => other,
    }
}

/// Fits the reward moments on `samples` and solves `spec` on the instance of `base`.
pub fn fit_and_solve(
    spec: &ModelSpec,
    base: &ConicProblem,
    samples: &SampleMatrix,
    choice: &SolverChoice,
) -> Result<SolveResult> {
    let moments = estimate_moments(samples, DEFAULT_EIG_FLOOR)?;
    let fitted = base.with_reward(Arc::new(moments))?;
    solve_lenient(spec, &fitted, Some(samples), choice)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    /// Share of the samples held out for scoring.
    pub holdout_fraction: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub best: ModelSpec,
    pub index: usize,
    /// Holdout score of every candidate, in grid order.
    pub scores: Vec<f64>,
}

/// Picks the candidate whose policy scores best on the holdout split; ties go
/// to the lowest grid index.
pub fn cross_validate(
    samples: &SampleMatrix,
    base: &ConicProblem,
    grid: &[ModelSpec],
    metric: Metric,
    cv: &CvConfig,
    choice: &SolverChoice,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("empty parameter grid"));
    }
    let n = samples.num_samples();
    if n < 10 {
        return Err(Error::invalid(format!("cross-validation needs at least 10 samples, got {n}")));
    }
    if !(cv.holdout_fraction > 0.0 && cv.holdout_fraction < 1.0) {
        return Err(Error::invalid("holdout fraction must lie in (0, 1)"));
    }
    if grid.len() == 1 {
        return Ok(CvOutcome {
            best: grid[0].clone(),
            index: 0,
            scores: vec![f64::NAN],
        });
    }
    let holdout = ((n as f64 * cv.holdout_fraction).round() as usize).clamp(1, n - 2);
    let (train, test) = samples.split_at(n - holdout)?;
    let moments = Arc::new(estimate_moments(&train, DEFAULT_EIG_FLOOR)?);
    let fitted = base.with_reward(moments)?;
    let mut scores = Vec::with_capacity(grid.len());
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, spec) in grid.iter().enumerate() {
        let res = solve_lenient(spec, &fitted, Some(&train), choice)?;
        let score = evaluate_policy_empirical(&res.x.clamped(), &test, &[metric])?[0].1;
        if score > best.0 {
            best = (score, i);
        }
        scores.push(score);
    }
    Ok(CvOutcome {
        best: grid[best.1].clone(),
        index: best.1,
        scores,
    })
}
