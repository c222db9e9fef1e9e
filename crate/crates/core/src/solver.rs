//! AD-LPMM (alternating direction linearized proximal method of multipliers)
//! for `max mu^T x - a ||x||_2 - b ||sigma^{1/2} x||_2` over the occupancy polytope.
//!
//! The problem is split as
//!
//! ```text
//! min  a ||x|| + b ||sigma^{1/2} y|| - mu^T z
//! s.t. Amat x = p0,  x = y,  x = z,  z >= 0
//! ```
//!
//! and each block update has a closed form: a Mahalanobis-norm prox for `y`
//! (an ellipsoid projection in the eigenbasis of `sigma`), a clamp for `z`
//! and a linearized L2 prox for `x`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    build_constraints, occupancy_of_policy, policy_of_occupancy, ConstraintMatrices, MdpInstance,
    OccupancyMeasure, Policy,
};
use crate::stats::EllipticalRef;

/// `max mu^T x - a ||x||_2 - b ||sigma^{1/2} x||_2` over the occupancy polytope.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    mdp: Arc<MdpInstance>,
    constraints: Arc<ConstraintMatrices>,
    reward: Arc<EllipticalRef>,
    a: f64,
    b: f64,
}

impl ConicProblem {
    pub fn new(
        mdp: Arc<MdpInstance>,
        constraints: Arc<ConstraintMatrices>,
        reward: Arc<EllipticalRef>,
        a: f64,
        b: f64,
    ) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite() && b >= 0.0 && b.is_finite()) {
            return Err(Error::invalid(format!(
                "norm coefficients must be finite and nonnegative, got a={a}, b={b}"
            )));
        }
        if reward.dim() != mdp.num_pairs() || constraints.num_cols() != mdp.num_pairs() {
            return Err(Error::invalid(format!(
                "reward dimension {} does not match {} state-action pairs",
                reward.dim(),
                mdp.num_pairs()
            )));
        }
        Ok(Self {
            mdp,
            constraints,
            reward,
            a,
            b,
        })
    }

    /// Builds the constraint matrices from `mdp`.
    pub fn from_parts(mdp: MdpInstance, reward: EllipticalRef, a: f64, b: f64) -> Result<Self> {
        let constraints = Arc::new(build_constraints(&mdp));
        Self::new(Arc::new(mdp), constraints, Arc::new(reward), a, b)
    }

    /// Same instance and coefficients with a different reward distribution.
    pub fn with_reward(&self, reward: Arc<EllipticalRef>) -> Result<Self> {
        Self::new(self.mdp.clone(), self.constraints.clone(), reward, self.a, self.b)
    }

    /// Same instance with different coefficients.
    pub fn with_coefficients(&self, a: f64, b: f64) -> Result<Self> {
        Self::new(
            self.mdp.clone(),
            self.constraints.clone(),
            self.reward.clone(),
            a,
            b,
        )
    }

    pub fn mdp(&self) -> &MdpInstance {
        &self.mdp
    }

    pub fn constraints(&self) -> &ConstraintMatrices {
        &self.constraints
    }

    pub fn reward(&self) -> &EllipticalRef {
        &self.reward
    }

    pub fn mdp_arc(&self) -> &Arc<MdpInstance> {
        &self.mdp
    }

    pub fn constraints_arc(&self) -> &Arc<ConstraintMatrices> {
        &self.constraints
    }

    pub fn reward_arc(&self) -> &Arc<EllipticalRef> {
        &self.reward
    }

    /// Coefficient of `||x||_2`.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Coefficient of `||sigma^{1/2} x||_2`.
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let mut v = self.reward.mean().dot(x);
        if self.a > 0.0 {
            v -= self.a * x.norm();
        }
        if self.b > 0.0 {
            v -= self.b * self.reward.sigma_norm(x);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Initial penalty `c0`.
    pub initial_stepsize: f64,
    /// Penalty grows by `growth * c0` per iteration.
    pub stepsize_growth: f64,
    /// Stop once the stacked primal residual drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Bisection tolerance of the ellipsoid projection.
    pub projection_tol: f64,
    /// Start the multipliers from a point satisfying the x-stationarity
    /// condition at the initial iterate instead of zero.
    pub dual_warm_start: bool,
    pub proximal_weight: ProximalWeight,
    /// Wall-clock budget; exceeding it ends the run as not converged.
    pub time_limit_seconds: Option<f64>,
}

/// Weight `nu` of the linearized x-step. Any value at least
/// `||Amat^T Amat + 2 I||_2` keeps the step a majorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProximalWeight {
    /// `||Amat^T Amat + 2 I||_F`
    #[default]
    Frobenius,
    /// `||Amat^T Amat + 2 I||_2`, the smallest valid weight.
    Spectral,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            initial_stepsize: 1.0,
            stepsize_growth: 0.001,
            tolerance: 1e-6,
            max_iterations: 200_000,
            projection_tol: 1e-12,
            dual_warm_start: false,
            proximal_weight: ProximalWeight::Frobenius,
            time_limit_seconds: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_stepsize > 0.0 && self.initial_stepsize.is_finite()) {
            return Err(Error::invalid("initial stepsize must be positive"));
        }
        if !(self.stepsize_growth >= 0.0 && self.stepsize_growth.is_finite()) {
            return Err(Error::invalid("stepsize growth must be nonnegative"));
        }
        if !(self.tolerance > 0.0) || !(self.projection_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if matches!(self.time_limit_seconds, Some(t) if !(t > 0.0)) {
            return Err(Error::invalid("time limit must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Solution of a [`ConicProblem`] or of one of the non-conic models.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Occupancy iterate as produced by the method (may carry `-tol` dust).
    pub x: OccupancyMeasure,
    pub policy: Policy,
    /// Objective at the nonnegative part of `x`.
    pub objective: f64,
    /// Stacked primal residual (AD-LPMM) or optimality gap estimate (oracles).
    pub residual: f64,
    pub iterations: usize,
    pub elapsed: Duration,
    pub converged: bool,
}

/// `||Amat^T Amat + 2 I||_2 = lambda_max(Amat Amat^T) + 2`.
pub fn spectral_nu(constraints: &ConstraintMatrices) -> Result<f64> {
    let amat = &constraints.amat;
    let (values, _) = crate::linalg::symmetric_eigen(&(amat * amat.transpose()))?;
    Ok(values.max() + 2.0)
}

/// `||Amat^T Amat + 2 I||_F`, computed through the small Gram matrix `Amat Amat^T`.
pub fn nu_parameter(constraints: &ConstraintMatrices) -> f64 {
    let amat = &constraints.amat;
    let small = amat * amat.transpose();
    let n = amat.ncols() as f64;
    // ||A^T A||_F = ||A A^T||_F and tr(A^T A) = ||A||_F^2
    (small.norm_squared() + 4.0 * amat.norm_squared() + 4.0 * n).sqrt()
}

/// Euclidean projection of `point` onto `{u : sum d_i u_i^2 <= 1}`.
///
/// Outside the ellipsoid the solution is `u_i = b_i / (1 + 2 zeta d_i)` where
/// `zeta` solves `sum d_i b_i^2 / (1 + 2 zeta d_i)^2 = 1`; `zeta` is bisected
/// from an explicit upper bound. The upper end of the final bracket is used,
/// so the result is always feasible.
pub fn project_ellipsoid(point: &[f64], d: &[f64], tol: f64) -> Vec<f64> {
    debug_assert_eq!(point.len(), d.len());
    let weighted = |zeta: f64| -> f64 {
        point
            .iter()
            .zip(d)
            .map(|(b, di)| {
                let s = 1.0 + 2.0 * zeta * di;
                di * b * b / (s * s)
            })
            .sum()
    };
    if weighted(0.0) <= 1.0 {
        return point.to_vec();
    }
    let n = point.len() as f64;
    let (mut top, mut top_i) = (f64::NEG_INFINITY, 0);
    for (i, (b, di)) in point.iter().zip(d).enumerate() {
        if di * b * b > top {
            top = di * b * b;
            top_i = i;
        }
    }
    let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = (point[top_i].abs() * (n * d[top_i]).sqrt() - 1.0) / (2.0 * d_min);
    // the bound is exact in theory; widen in the rare case rounding defeats it
    while weighted(hi) > 1.0 {
        hi = 2.0 * hi.max(f64::MIN_POSITIVE);
    }
    let mut lo = 0.0;
    for _ in 0..2000 {
        if hi - lo <= tol * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if weighted(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    point
        .iter()
        .zip(d)
        .map(|(b, di)| b / (1.0 + 2.0 * hi * di))
        .collect()
}

/// Prox of `(b/c) ||sigma^{1/2} .||_2` at `x + xi / c`.
///
/// Uses the Moreau decomposition: the dual norm ball is
/// `{v : v^T sigma^{-1} v <= 1}`, projected onto in the eigenbasis of `sigma`.
pub fn prox_y(
    x: &DVector<f64>,
    xi: &DVector<f64>,
    c: f64,
    prob: &ConicProblem,
    tol: f64,
) -> DVector<f64> {
    let v = x + xi / c;
    if prob.b == 0.0 {
        return v;
    }
    let reward = &prob.reward;
    let scaled = &v * (c / prob.b);
    let coords = reward.to_eigenbasis(&scaled);
    let d: Vec<f64> = reward.eigenvalues().iter().map(|w| 1.0 / w).collect();
    let u = project_ellipsoid(coords.as_slice(), &d, tol);
    let back = reward.from_eigenbasis(&DVector::from_vec(u));
    v - back * (prob.b / c)
}

/// `z_i = max(0, x_i + (mu_i + eta_i) / c)`.
pub fn update_z(x: &DVector<f64>, eta: &DVector<f64>, mu: &DVector<f64>, c: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| (x[i] + (mu[i] + eta[i]) / c).max(0.0))
}

/// Dual multipliers of the three coupling constraints.
#[derive(Debug, Clone)]
pub struct Multipliers {
    /// `Amat x = p0`
    pub flow: DVector<f64>,
    /// `x = y`
    pub xi: DVector<f64>,
    /// `x = z`
    pub eta: DVector<f64>,
}

impl Multipliers {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            flow: DVector::zeros(rows),
            xi: DVector::zeros(cols),
            eta: DVector::zeros(cols),
        }
    }
}

/// Multipliers making `x0` stationary for the x-block.
///
/// With `g` the objective gradient at `x0`: `xi` is the Mahalanobis-norm
/// part, the flow multiplier is the value function of reward `g` (so that
/// `Amat^T flow >= g`) and `eta = -mu - (Amat^T flow - g)`.
pub fn warm_multipliers(prob: &ConicProblem, x0: &DVector<f64>) -> Result<Multipliers> {
    let mu = prob.reward.mean();
    let mut grad = mu.clone();
    let mut xi = DVector::zeros(x0.len());
    if prob.b > 0.0 {
        let sx = prob.reward.cov_apply(x0);
        let n = x0.dot(&sx).max(0.0).sqrt();
        if n > 0.0 {
            xi = sx * (prob.b / n);
            grad -= &xi;
        }
    }
    if prob.a > 0.0 {
        let n = x0.norm();
        if n > 0.0 {
            grad.axpy(-prob.a / n, x0, 1.0);
        }
    }
    let vi = crate::mdp::value_iteration(&prob.mdp, grad.as_slice(), 1e-10)?;
    let slack = prob.constraints.apply_transpose(&vi.values) - &grad;
    let eta = -(mu + slack);
    Ok(Multipliers {
        flow: vi.values,
        xi,
        eta,
    })
}

/// Shrinks `p` towards the origin by `t` in Euclidean norm.
pub fn shrink_l2(p: DVector<f64>, t: f64) -> DVector<f64> {
    if t <= 0.0 {
        return p;
    }
    let norm = p.norm();
    p * (1.0 - t / norm.max(t))
}

/// Linearized x-step: prox of `(a/(c nu)) ||.||_2` at `x_hat - w`.
#[allow(clippy::too_many_arguments)]
pub fn update_x(
    y: &DVector<f64>,
    z: &DVector<f64>,
    duals: &Multipliers,
    c: f64,
    nu: f64,
    x_hat: &DVector<f64>,
    prob: &ConicProblem,
) -> DVector<f64> {
    let cons = &prob.constraints;
    let p0 = DVector::from_column_slice(prob.mdp.p0());
    let mut flow_grad = cons.apply_transpose(&duals.flow);
    flow_grad += &duals.xi;
    flow_grad += &duals.eta;
    let infeas = cons.apply(x_hat) - p0;
    let mut penalty_grad = cons.apply_transpose(&infeas);
    penalty_grad += x_hat * 2.0;
    penalty_grad -= y;
    penalty_grad -= z;
    let w = flow_grad / (c * nu) + penalty_grad / nu;
    shrink_l2(x_hat - w, prob.a / (c * nu))
}

/// Stacked primal residual `||(Amat x - p0; x - y; x - z)||_inf`.
pub fn stacked_residual(
    prob: &ConicProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    let flow = prob.constraints.feasibility_residual(x, prob.mdp.p0());
    let mut r = flow;
    for i in 0..x.len() {
        r = r.max((x[i] - y[i]).abs()).max((x[i] - z[i]).abs());
    }
    r
}

/// Runs AD-LPMM from the occupancy of the uniform policy.
pub fn solve(prob: &ConicProblem, cfg: &SolverConfig) -> Result<SolveResult> {
    let start = occupancy_of_policy(
        &prob.mdp,
        &Policy::uniform(prob.mdp.num_states(), prob.mdp.num_actions()),
    )?;
    solve_from(prob, cfg, start.0)
}

/// Runs AD-LPMM from `x0` (also used for `y` and `z`), with zero multipliers.
pub fn solve_from(prob: &ConicProblem, cfg: &SolverConfig, x0: DVector<f64>) -> Result<SolveResult> {
    cfg.validate()?;
    if x0.len() != prob.mdp.num_pairs() {
        return Err(Error::invalid("initial point has the wrong length"));
    }
    let timer = Instant::now();
    let nu = match cfg.proximal_weight {
        ProximalWeight::Frobenius => nu_parameter(&prob.constraints),
        ProximalWeight::Spectral => spectral_nu(&prob.constraints)?,
    };
    let deadline = cfg.time_limit_seconds.map(Duration::from_secs_f64);
    let mu = prob.reward.mean();
    let p0 = DVector::from_column_slice(prob.mdp.p0());
    let mut duals = if cfg.dual_warm_start {
        warm_multipliers(prob, &x0)?
    } else {
        Multipliers::zeros(prob.constraints.num_rows(), x0.len())
    };
    let mut x = x0;
    let mut c = cfg.initial_stepsize;
    let mut best = (f64::INFINITY, x.clone(), 0usize);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let y = prox_y(&x, &duals.xi, c, prob, cfg.projection_tol);
        let z = update_z(&x, &duals.eta, mu, c);
        x = update_x(&y, &z, &duals, c, nu, &x, prob);

        let infeas = prob.constraints.apply(&x) - &p0;
        duals.flow.axpy(c, &infeas, 1.0);
        duals.xi += (&x - &y) * c;
        duals.eta += (&x - &z) * c;
        c += cfg.stepsize_growth * cfg.initial_stepsize;

        residual = stacked_residual(prob, &x, &y, &z);
        if !residual.is_finite() {
            return Err(Error::Numerical(format!(
                "AD-LPMM diverged at iteration {iterations}"
            )));
        }
        if residual < best.0 {
            best = (residual, x.clone(), iterations);
        }
        if residual < cfg.tolerance {
            break;
        }
        if deadline.is_some_and(|d| timer.elapsed() >= d) {
            break;
        }
    }
    let converged = residual < cfg.tolerance;
    let result = finish(prob, x, residual, iterations, timer.elapsed(), converged)?;
    if converged {
        return Ok(result);
    }
    let best = finish(prob, best.1, best.0, best.2, timer.elapsed(), false)?;
    Err(Error::NotConverged {
        residual,
        iterations,
        best: Box::new(best),
    })
}

fn finish(
    prob: &ConicProblem,
    x: DVector<f64>,
    residual: f64,
    iterations: usize,
    elapsed: Duration,
    converged: bool,
) -> Result<SolveResult> {
    let x = OccupancyMeasure(x);
    let clamped = x.clamped();
    let objective = prob.objective(&clamped.0);
    let policy = policy_of_occupancy(&clamped, prob.mdp.num_actions())?;
    Ok(SolveResult {
        x,
        policy,
        objective,
        residual,
        iterations,
        elapsed,
        converged,
    })
}
