//! Frank-Wolfe (conditional gradient) over the occupancy polytope.
//!
//! The linear maximization oracle is exact: maximizing `c^T x` over the
//! polytope is a discounted MDP with reward `c`, solved by value iteration.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    occupancy_of_policy, policy_of_occupancy, value_iteration_from, MdpInstance, OccupancyMeasure,
    Policy,
};
use crate::solver::{ConicProblem, SolveResult};

/// Value iteration tolerance inside the oracle.
pub const LMO_TOL: f64 = 1e-10;

/// Concave objective whose value and gradient read `x` through a linear
/// image `L x`, so iterates can carry the image along by linearity.
pub trait SmoothObjective {
    fn image(&self, x: &DVector<f64>) -> DVector<f64>;
    fn value_with(&self, x: &DVector<f64>, image: &DVector<f64>) -> f64;
    fn gradient_with(&self, x: &DVector<f64>, image: &DVector<f64>) -> DVector<f64>;

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.value_with(x, &self.image(x))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.gradient_with(x, &self.image(x))
    }
}

/// Objective with a supergradient at every point (piecewise linear, say).
pub trait SupergradientObjective {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn supergradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// `mu^T x - a ||x|| - b ||sigma^{1/2} x||` with image `sigma x`.
pub struct ConicObjective<'a> {
    prob: &'a ConicProblem,
}

impl<'a> ConicObjective<'a> {
    pub fn new(prob: &'a ConicProblem) -> Self {
        Self { prob }
    }
}

impl SmoothObjective for ConicObjective<'_> {
    fn image(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.prob.b() > 0.0 {
            self.prob.reward().cov_apply(x)
        } else {
            DVector::zeros(0)
        }
    }

    fn value_with(&self, x: &DVector<f64>, image: &DVector<f64>) -> f64 {
        let mut v = self.prob.reward().mean().dot(x);
        if self.prob.a() > 0.0 {
            v -= self.prob.a() * x.norm();
        }
        if self.prob.b() > 0.0 {
            v -= self.prob.b() * x.dot(image).max(0.0).sqrt();
        }
        v
    }

    fn gradient_with(&self, x: &DVector<f64>, image: &DVector<f64>) -> DVector<f64> {
        let mut g = self.prob.reward().mean().clone();
        let (a, b) = (self.prob.a(), self.prob.b());
        if a > 0.0 {
            let n = x.norm();
            if n > 0.0 {
                g.axpy(-a / n, x, 1.0);
            }
        }
        if b > 0.0 {
            let n = x.dot(image).max(0.0).sqrt();
            if n > 0.0 {
                g.axpy(-b / n, image, 1.0);
            }
        }
        g
    }
}

/// Vertex oracle state: warm-started values for the next call.
#[derive(Debug, Clone, Default)]
pub struct Lmo {
    values: Option<DVector<f64>>,
}

impl Lmo {
    pub fn new() -> Self {
        Self::default()
    }

    /// Occupancy of the greedy policy for reward `direction`.
    pub fn call(&mut self, mdp: &MdpInstance, direction: &DVector<f64>) -> Result<(OccupancyMeasure, Policy)> {
        let vi = value_iteration_from(mdp, direction.as_slice(), LMO_TOL, self.values.as_ref())?;
        let x = occupancy_of_policy(mdp, &vi.policy)?;
        self.values = Some(vi.values);
        Ok((x, vi.policy))
    }
}

/// Maximizer of `direction^T x` over the occupancy polytope.
pub fn lmo(mdp: &MdpInstance, direction: &DVector<f64>) -> Result<OccupancyMeasure> {
    Ok(Lmo::new().call(mdp, direction)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `2 / (k + 2)`
    Harmonic,
    /// Golden-section maximization along the segment.
    LineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FwConfig {
    pub max_iterations: usize,
    /// Stop once the duality gap is below `gap_tol * |f|`.
    pub gap_tol: f64,
    pub step_rule: StepRule,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            gap_tol: 1e-6,
            step_rule: StepRule::LineSearch,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FwResult {
    /// Best iterate by objective value.
    pub x: OccupancyMeasure,
    pub value: f64,
    /// `min_k (f(x_k) + g_k) - value`, an upper bound on the suboptimality of
    /// `x` (zero-information `INFINITY` in nonsmooth mode).
    pub gap: f64,
    pub iterations: usize,
}

fn uniform_start(mdp: &MdpInstance) -> Result<OccupancyMeasure> {
    occupancy_of_policy(mdp, &Policy::uniform(mdp.num_states(), mdp.num_actions()))
}

/// Maximizes `phi(t) = f((1 - t) x + t s)` over `[0, 1]` by golden section.
fn golden_section(phi: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut m1 = hi - INV_PHI * (hi - lo);
    let mut m2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (phi(m1), phi(m2));
    while hi - lo > 1e-12 {
        if f1 < f2 {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + INV_PHI * (hi - lo);
            f2 = phi(m2);
        } else {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - INV_PHI * (hi - lo);
            f1 = phi(m1);
        }
    }
    // endpoints are candidates too (the maximizer is often t = 1 early on)
    let mid = 0.5 * (lo + hi);
    [0.0, mid, 1.0]
        .into_iter()
        .map(|t| (t, phi(t)))
        .fold((0.0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
        .0
}

/// Frank-Wolfe from the uniform-policy occupancy.
pub fn maximize(obj: &impl SmoothObjective, mdp: &MdpInstance, cfg: &FwConfig) -> Result<FwResult> {
    if cfg.max_iterations == 0 {
        return Err(Error::invalid("Frank-Wolfe needs at least one iteration"));
    }
    let mut oracle = Lmo::new();
    let mut x = uniform_start(mdp)?.0;
    let mut img = obj.image(&x);
    let mut value = obj.value_with(&x, &img);
    let mut best = (value, x.clone());
    let mut upper = f64::INFINITY;
    let mut iterations = 0;
    for k in 0..cfg.max_iterations {
        iterations = k + 1;
        let grad = obj.gradient_with(&x, &img);
        let (s, _) = oracle.call(mdp, &grad)?;
        let s = s.0;
        let gap = grad.dot(&s) - grad.dot(&x);
        upper = upper.min(value + gap.max(0.0));
        if gap <= cfg.gap_tol * value.abs().max(1e-300) {
            break;
        }
        let s_img = obj.image(&s);
        let t = match cfg.step_rule {
            StepRule::Harmonic => 2.0 / (k as f64 + 2.0),
            StepRule::LineSearch => golden_section(|t| {
                let xt = &x * (1.0 - t) + &s * t;
                let it = &img * (1.0 - t) + &s_img * t;
                obj.value_with(&xt, &it)
            }),
        };
        x = &x * (1.0 - t) + &s * t;
        img = &img * (1.0 - t) + &s_img * t;
        value = obj.value_with(&x, &img);
        if value > best.0 {
            best = (value, x.clone());
        }
    }
    Ok(FwResult {
        x: OccupancyMeasure(best.1),
        value: best.0,
        gap: (upper - best.0).max(0.0),
        iterations,
    })
}

/// Frank-Wolfe with `2 / (k + 2)` steps along supergradient vertices.
///
/// Heuristic for nonsmooth concave objectives: no certificate, the best
/// iterate seen is returned.
pub fn maximize_nonsmooth(
    obj: &impl SupergradientObjective,
    mdp: &MdpInstance,
    iters: usize,
) -> Result<FwResult> {
    if iters == 0 {
        return Err(Error::invalid("Frank-Wolfe needs at least one iteration"));
    }
    let mut oracle = Lmo::new();
    let mut x = uniform_start(mdp)?.0;
    let mut best = (obj.value(&x), x.clone());
    for k in 0..iters {
        let g = obj.supergradient(&x);
        let (s, _) = oracle.call(mdp, &g)?;
        let t = 2.0 / (k as f64 + 2.0);
        x = &x * (1.0 - t) + &s.0 * t;
        let v = obj.value(&x);
        if v > best.0 {
            best = (v, x.clone());
        }
    }
    Ok(FwResult {
        x: OccupancyMeasure(best.1),
        value: best.0,
        gap: f64::INFINITY,
        iterations: iters,
    })
}

/// Solves a conic problem with Frank-Wolfe, packaged like an AD-LPMM result.
pub fn solve_conic(prob: &ConicProblem, cfg: &FwConfig) -> Result<SolveResult> {
    let timer = Instant::now();
    let res = maximize(&ConicObjective::new(prob), prob.mdp(), cfg)?;
    let policy = policy_of_occupancy(&res.x, prob.mdp().num_actions())?;
    let converged = res.gap <= cfg.gap_tol * res.value.abs();
    Ok(SolveResult {
        objective: prob.objective(&res.x.0),
        x: res.x,
        policy,
        residual: res.gap,
        iterations: res.iterations,
        elapsed: timer.elapsed(),
        converged,
    })
}
