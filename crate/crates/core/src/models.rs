//! Risk-averse models and their reduction to the conic family.
//!
//! Every model except BROIL and the soft-robust one compiles to
//! `max mu^T x - a ||x|| - b ||sigma^{1/2} x||` over the occupancy polytope.

use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_optimistic, calibrate_pessimistic, upper_quantile, RiskSpec, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::frank_wolfe::{self, FwConfig, SupergradientObjective};
use crate::mdp::{occupancy_of_policy, policy_of_occupancy, MdpInstance, OccupancyMeasure, Policy};
use crate::solver::{self, ConicProblem, SolveResult, SolverConfig};
use crate::stats::{chi2_quantile, empirical_var_cvar, std_normal_pdf, EllipticalRef, Generator, SampleMatrix};

/// Largest number of deterministic policies the soft-robust search will visit.
pub const ENUMERATION_BOUND: usize = 1_000_000;

/// Envelope tolerance of [`mccormick_exactness_check`].
pub const ENVELOPE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(alias = "nominal")]
    Nominal,
    #[serde(alias = "cc")]
    CC,
    #[serde(alias = "drmdp")]
    DRMDP,
    #[serde(alias = "dcc")]
    DCC,
    #[serde(alias = "rr")]
    RR,
    #[serde(alias = "optimistic_cc")]
    OptimisticCC,
    #[serde(alias = "rmdp_static")]
    RmdpStatic,
    #[serde(alias = "broil")]
    Broil,
    #[serde(alias = "soft_robust_det")]
    SoftRobustDet,
}

impl ModelKind {
    pub fn is_conic(self) -> bool {
        !matches!(self, ModelKind::Broil | ModelKind::SoftRobustDet)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nominal => "Nominal",
            ModelKind::CC => "CC",
            ModelKind::DRMDP => "DRMDP",
            ModelKind::DCC => "DCC",
            ModelKind::RR => "RR",
            ModelKind::OptimisticCC => "OptimisticCC",
            ModelKind::RmdpStatic => "RmdpStatic",
            ModelKind::Broil => "Broil",
            ModelKind::SoftRobustDet => "SoftRobustDet",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("unknown model kind `{s}`")))
    }
}

/// One sampled transition kernel with its probability weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSample {
    pub weight: f64,
    /// `kernel[s][a][s']`
    pub kernel: Vec<Vec<Vec<f64>>>,
}

impl KernelSample {
    fn flat(&self) -> Vec<f64> {
        self.kernel.iter().flatten().flatten().copied().collect()
    }
}

/// A model and its parameters. Unused parameters stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iota: Option<f64>,
    /// Radius of the chance-constraint ambiguity set of RR when it differs
    /// from `theta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<KernelSample>>,
}

impl ModelSpec {
    fn bare(kind: ModelKind) -> Self {
        Self {
            kind,
            alpha: None,
            theta: None,
            epsilon: None,
            lambda: None,
            kappa: None,
            psi: None,
            iota: None,
            theta_var: None,
            kernels: None,
        }
    }

    pub fn nominal() -> Self {
        Self::bare(ModelKind::Nominal)
    }

    pub fn cc(epsilon: f64) -> Self {
        Self {
            epsilon: Some(epsilon),
            ..Self::bare(ModelKind::CC)
        }
    }

    pub fn drmdp(theta: f64) -> Self {
        Self {
            theta: Some(theta),
            ..Self::bare(ModelKind::DRMDP)
        }
    }

    pub fn dcc(theta: f64, epsilon: f64) -> Self {
        Self {
            theta: Some(theta),
            epsilon: Some(epsilon),
            ..Self::bare(ModelKind::DCC)
        }
    }

    pub fn rr(alpha: f64, theta: f64, epsilon: f64) -> Self {
        Self {
            alpha: Some(alpha),
            theta: Some(theta),
            epsilon: Some(epsilon),
            ..Self::bare(ModelKind::RR)
        }
    }

    pub fn optimistic_cc(theta: f64, epsilon: f64) -> Self {
        Self {
            theta: Some(theta),
            epsilon: Some(epsilon),
            ..Self::bare(ModelKind::OptimisticCC)
        }
    }

    /// Static robust model; `None` picks the 99% confidence ellipsoid.
    pub fn rmdp_static(kappa: Option<f64>) -> Self {
        Self {
            kappa,
            ..Self::bare(ModelKind::RmdpStatic)
        }
    }

    pub fn broil(lambda: f64, epsilon: f64) -> Self {
        Self {
            lambda: Some(lambda),
            epsilon: Some(epsilon),
            ..Self::bare(ModelKind::Broil)
        }
    }

    pub fn soft_robust(psi: f64, iota: f64, rr: (f64, f64, f64), kernels: Vec<KernelSample>) -> Self {
        Self {
            psi: Some(psi),
            iota: Some(iota),
            alpha: Some(rr.0),
            theta: Some(rr.1),
            epsilon: Some(rr.2),
            kernels: Some(kernels),
            ..Self::bare(ModelKind::SoftRobustDet)
        }
    }

    fn need(&self, v: Option<f64>, name: &str) -> Result<f64> {
        v.ok_or_else(|| Error::invalid(format!("{} model needs `{name}`", self.kind)))
    }

    /// Checks that the parameters the kind uses are present and in range.
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, name: &str| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("`{name}` must lie in [0, 1], got {v}")))
            }
        };
        let nonneg = |v: f64, name: &str| -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("`{name}` must be a finite number >= 0, got {v}")))
            }
        };
        let risk = |v: f64| -> Result<()> {
            if v > 0.0 && v < 0.5 {
                Ok(())
            } else {
                Err(Error::invalid(format!("`epsilon` must lie in (0, 0.5), got {v}")))
            }
        };
        use ModelKind::*;
        match self.kind {
            Nominal => {}
            CC => risk(self.need(self.epsilon, "epsilon")?)?,
            DRMDP => nonneg(self.need(self.theta, "theta")?, "theta")?,
            DCC | OptimisticCC => {
                nonneg(self.need(self.theta, "theta")?, "theta")?;
                risk(self.need(self.epsilon, "epsilon")?)?;
            }
            RR | SoftRobustDet => {
                unit(self.need(self.alpha, "alpha")?, "alpha")?;
                nonneg(self.need(self.theta, "theta")?, "theta")?;
                risk(self.need(self.epsilon, "epsilon")?)?;
                if let Some(t) = self.theta_var {
                    nonneg(t, "theta_var")?;
                }
            }
            RmdpStatic => {
                if let Some(k) = self.kappa {
                    nonneg(k, "kappa")?;
                }
            }
            Broil => {
                unit(self.need(self.lambda, "lambda")?, "lambda")?;
                let e = self.need(self.epsilon, "epsilon")?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(Error::invalid(format!("`epsilon` must lie in (0, 1), got {e}")));
                }
            }
        }
        if self.kind == SoftRobustDet {
            unit(self.need(self.psi, "psi")?, "psi")?;
            let iota = self.need(self.iota, "iota")?;
            if !(0.0..1.0).contains(&iota) {
                return Err(Error::invalid(format!("`iota` must lie in [0, 1), got {iota}")));
            }
            let kernels = self
                .kernels
                .as_ref()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| Error::invalid("SoftRobustDet model needs at least one kernel sample"))?;
            check_weights(kernels.iter().map(|k| k.weight))?;
        }
        Ok(())
    }

    /// RR coefficients of the soft-robust inner problem.
    fn rr_coefficients(&self, dim: usize) -> Result<(f64, f64)> {
        let rr = ModelSpec {
            kind: ModelKind::RR,
            kernels: None,
            psi: None,
            iota: None,
            ..self.clone()
        };
        coefficients(&rr, dim)
    }
}

fn check_weights(weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!("kernel weight {w} is negative")));
        }
        total += w;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("kernel weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Calibrated pessimistic quantile `eta` with `sf(eta) = eps_lower`.
fn pessimistic_eta(epsilon: f64, theta: f64) -> Result<f64> {
    Ok(calibrate_pessimistic(&RiskSpec::new(epsilon, theta)?, DEFAULT_TOL)?.eta)
}

/// Coefficients `(a, b)` of the conic form over `dim` pairs.
pub fn coefficients(spec: &ModelSpec, dim: usize) -> Result<(f64, f64)> {
    spec.validate()?;
    let eps = || spec.need(spec.epsilon, "epsilon");
    let theta = || spec.need(spec.theta, "theta");
    use ModelKind::*;
    Ok(match spec.kind {
        Nominal => (0.0, 0.0),
        CC => (0.0, upper_quantile(eps()?)?),
        DRMDP => (theta()?, 0.0),
        DCC => (0.0, pessimistic_eta(eps()?, theta()?)?),
        RR => {
            let alpha = spec.need(spec.alpha, "alpha")?;
            let t = theta()?;
            let b = if alpha < 1.0 {
                (1.0 - alpha) * pessimistic_eta(eps()?, spec.theta_var.unwrap_or(t))?
            } else {
                0.0
            };
            (alpha * t, b)
        }
        OptimisticCC => {
            let cal = calibrate_optimistic(&RiskSpec::new(eps()?, theta()?)?, DEFAULT_TOL)?;
            (0.0, cal.eta)
        }
        RmdpStatic => match spec.kappa {
            Some(k) => (0.0, k),
            None => (0.0, chi2_quantile(dim, 0.99)?.sqrt()),
        },
        Broil | SoftRobustDet => {
            return Err(Error::invalid(format!("{} has no conic form", spec.kind)));
        }
    })
}

/// Compiles a conic-reducible model onto the instance carried by `base`
/// (whose own coefficients are ignored).
pub fn compile(spec: &ModelSpec, base: &ConicProblem) -> Result<ConicProblem> {
    let (a, b) = coefficients(spec, base.mdp().num_pairs())?;
    base.with_coefficients(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Adlpmm,
    Fw,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adlpmm" => Ok(SolverKind::Adlpmm),
            "fw" => Ok(SolverKind::Fw),
            _ => Err(Error::invalid(format!("unknown solver `{s}` (expected adlpmm or fw)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverChoice {
    pub kind: SolverKind,
    pub adlpmm: SolverConfig,
    pub fw: FwConfig,
    /// Iterations of the nonsmooth Frank-Wolfe run used for BROIL.
    pub broil_iterations: usize,
}

impl Default for SolverChoice {
    fn default() -> Self {
        Self {
            kind: SolverKind::Adlpmm,
            adlpmm: SolverConfig::default(),
            fw: FwConfig::default(),
            broil_iterations: 500,
        }
    }
}

impl SolverChoice {
    pub fn frank_wolfe() -> Self {
        Self {
            kind: SolverKind::Fw,
            ..Self::default()
        }
    }
}

/// Solves a conic problem with the chosen method.
pub fn solve_conic(prob: &ConicProblem, choice: &SolverChoice) -> Result<SolveResult> {
    match choice.kind {
        SolverKind::Adlpmm => solver::solve(prob, &choice.adlpmm),
        SolverKind::Fw => frank_wolfe::solve_conic(prob, &choice.fw),
    }
}

/// Solves any model. BROIL needs `samples`; the soft-robust model reads its
/// kernels from the spec.
pub fn solve_model(
    spec: &ModelSpec,
    base: &ConicProblem,
    samples: Option<&SampleMatrix>,
    choice: &SolverChoice,
) -> Result<SolveResult> {
    spec.validate()?;
    match spec.kind {
        ModelKind::Broil => {
            let samples = samples.ok_or_else(|| Error::invalid("Broil model needs reward samples"))?;
            solve_broil(
                base.mdp(),
                samples,
                spec.need(spec.lambda, "lambda")?,
                spec.need(spec.epsilon, "epsilon")?,
                choice.broil_iterations,
            )
        }
        ModelKind::SoftRobustDet => {
            let timer = std::time::Instant::now();
            let mdp = base.mdp();
            let kernels = spec.kernels.as_deref().unwrap_or_default();
            let scenarios = kernels
                .iter()
                .map(|k| Ok((k.weight, mdp.with_kernel(k.flat())?)))
                .collect::<Result<Vec<_>>>()?;
            let (a, b) = spec.rr_coefficients(mdp.num_pairs())?;
            let psi = spec.need(spec.psi, "psi")?;
            let iota = spec.need(spec.iota, "iota")?;
            let (policy, value) = solve_soft_robust_det(&scenarios, psi, iota, a, b, base.reward())?;
            let x = occupancy_of_policy(mdp, &policy)?;
            Ok(SolveResult {
                x,
                policy,
                objective: value,
                residual: 0.0,
                iterations: mdp.num_actions().pow(mdp.num_states() as u32),
                elapsed: timer.elapsed(),
                converged: true,
            })
        }
        _ => solve_conic(&compile(spec, base)?, choice),
    }
}

/// `lambda * mean + (1 - lambda) * CVaR_eps` of the sampled returns `R x`.
pub struct BroilObjective<'a> {
    samples: &'a SampleMatrix,
    mean: DVector<f64>,
    lambda: f64,
    epsilon: f64,
}

impl<'a> BroilObjective<'a> {
    pub fn new(samples: &'a SampleMatrix, lambda: f64, epsilon: f64) -> Result<Self> {
        if samples.num_samples() == 0 {
            return Err(Error::invalid("BROIL needs at least one sample"));
        }
        if !(0.0..=1.0).contains(&lambda) || !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!("bad BROIL parameters lambda={lambda}, epsilon={epsilon}")));
        }
        Ok(Self {
            mean: samples.mean(),
            samples,
            lambda,
            epsilon,
        })
    }
}

impl SupergradientObjective for BroilObjective<'_> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let returns = self.samples.returns(x);
        let (_, cvar) = empirical_var_cvar(returns.as_slice(), self.epsilon).expect("validated at construction");
        self.lambda * self.mean.dot(x) + (1.0 - self.lambda) * cvar
    }

    fn supergradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let returns = self.samples.returns(x);
        let n = returns.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| returns[i].total_cmp(&returns[j]));
        let tail = self.epsilon * n as f64;
        let k = ((tail - 1e-9).ceil() as usize).clamp(1, n);
        let m = self.samples.matrix();
        // CVaR = (sum of the k-1 worst + (eps n - k + 1) times the k-th) / (eps n)
        let mut g = DVector::zeros(m.ncols());
        for (rank, &i) in order[..k].iter().enumerate() {
            let w = if rank + 1 < k { 1.0 } else { tail - (k - 1) as f64 };
            g.axpy(w / tail, &m.row(i).transpose(), 1.0);
        }
        g * (1.0 - self.lambda) + &self.mean * self.lambda
    }
}

/// BROIL by nonsmooth Frank-Wolfe. Heuristic: the best iterate is returned
/// without an optimality certificate.
pub fn solve_broil(
    mdp: &MdpInstance,
    samples: &SampleMatrix,
    lambda: f64,
    epsilon: f64,
    iters: usize,
) -> Result<SolveResult> {
    if samples.dim() != mdp.num_pairs() {
        return Err(Error::invalid(format!(
            "samples have dimension {}, instance has {} pairs",
            samples.dim(),
            mdp.num_pairs()
        )));
    }
    let timer = std::time::Instant::now();
    let obj = BroilObjective::new(samples, lambda, epsilon)?;
    let res = frank_wolfe::maximize_nonsmooth(&obj, mdp, iters)?;
    let policy = policy_of_occupancy(&res.x, mdp.num_actions())?;
    Ok(SolveResult {
        objective: obj.value(&res.x.0),
        x: res.x,
        policy,
        residual: res.gap,
        iterations: res.iterations,
        elapsed: timer.elapsed(),
        converged: true,
    })
}

fn conic_value(x: &DVector<f64>, reward: &EllipticalRef, a: f64, b: f64) -> f64 {
    let mut v = reward.mean().dot(x);
    if a != 0.0 {
        v -= a * x.norm();
    }
    if b != 0.0 {
        v -= b * reward.sigma_norm(x);
    }
    v
}

/// Conic objective of the occupancy that a deterministic policy induces
/// under `mdp`'s kernel.
pub fn eval_g(policy: &Policy, mdp: &MdpInstance, reward: &EllipticalRef, a: f64, b: f64) -> Result<f64> {
    if !policy.is_deterministic() {
        return Err(Error::invalid("eval_g needs a deterministic policy"));
    }
    if reward.dim() != mdp.num_pairs() {
        return Err(Error::invalid("reward dimension does not match the instance"));
    }
    let x = occupancy_of_policy(mdp, policy)?;
    Ok(conic_value(&x.0, reward, a, b))
}

/// `max_eta eta - (1/(1-iota)) sum_i w_i (eta - g_i)^+`, attained at some `g_i`.
pub fn weighted_cvar(weights: &[f64], values: &[f64], iota: f64) -> f64 {
    let scale = 1.0 / (1.0 - iota);
    values
        .iter()
        .map(|&eta| {
            let shortfall: f64 = weights
                .iter()
                .zip(values)
                .map(|(w, g)| w * (eta - g).max(0.0))
                .sum();
            eta - scale * shortfall
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Soft-robust value of one policy from its per-kernel scores.
pub fn soft_robust_value(weights: &[f64], g: &[f64], psi: f64, iota: f64) -> f64 {
    let expected: f64 = weights.iter().zip(g).map(|(w, g)| w * g).sum();
    psi * expected + (1.0 - psi) * weighted_cvar(weights, g, iota)
}

/// Decodes the `index`-th deterministic policy in lexicographic order (state 0
/// is the most significant digit).
pub fn policy_actions(mut index: usize, num_states: usize, num_actions: usize) -> Vec<usize> {
    let mut actions = vec![0; num_states];
    for s in (0..num_states).rev() {
        actions[s] = index % num_actions;
        index /= num_actions;
    }
    actions
}

/// Number of deterministic policies, failing above [`ENUMERATION_BOUND`].
pub fn enumeration_size(num_states: usize, num_actions: usize) -> Result<usize> {
    let count = (num_actions as f64).powi(num_states as i32);
    if count > ENUMERATION_BOUND as f64 {
        return Err(Error::EnumerationTooLarge {
            count,
            bound: ENUMERATION_BOUND,
        });
    }
    Ok(count as usize)
}

/// Best deterministic policy for the soft-robust objective, by exhaustive
/// search. `scenarios` pairs each weight with an instance carrying that kernel.
pub fn solve_soft_robust_det(
    scenarios: &[(f64, MdpInstance)],
    psi: f64,
    iota: f64,
    a: f64,
    b: f64,
    reward: &EllipticalRef,
) -> Result<(Policy, f64)> {
    let first = &scenarios
        .first()
        .ok_or_else(|| Error::invalid("need at least one kernel sample"))?
        .1;
    let (ns, na) = (first.num_states(), first.num_actions());
    if scenarios.iter().any(|(_, m)| m.num_states() != ns || m.num_actions() != na) {
        return Err(Error::invalid("kernel samples disagree on the state-action shape"));
    }
    if !(0.0..=1.0).contains(&psi) || !(0.0..1.0).contains(&iota) {
        return Err(Error::invalid(format!("bad soft-robust parameters psi={psi}, iota={iota}")));
    }
    check_weights(scenarios.iter().map(|s| s.0))?;
    let count = enumeration_size(ns, na)?;
    let weights: Vec<f64> = scenarios.iter().map(|s| s.0).collect();
    let score = |index: usize| -> Result<(f64, usize)> {
        let policy = Policy::deterministic(&policy_actions(index, ns, na), na)?;
        let g = scenarios
            .iter()
            .map(|(_, m)| eval_g(&policy, m, reward, a, b))
            .collect::<Result<Vec<_>>>()?;
        Ok((soft_robust_value(&weights, &g, psi, iota), index))
    };
    let better = |p: (f64, usize), q: (f64, usize)| {
        if q.0 > p.0 || (q.0 == p.0 && q.1 < p.1) {
            q
        } else {
            p
        }
    };
    let (value, index) = (0..count)
        .into_par_iter()
        .map(score)
        .try_reduce(|| (f64::NEG_INFINITY, usize::MAX), |p, q| Ok(better(p, q)))?;
    Ok((Policy::deterministic(&policy_actions(index, ns, na), na)?, value))
}

/// Checks the four McCormick envelopes for weighted occupancies `xs[i]`
/// (already multiplied by `weights[i]`) against policy `pi`.
pub fn mccormick_envelopes_hold(policy: &Policy, xs: &[DVector<f64>], weights: &[f64], gamma: f64) -> bool {
    let (ns, na) = (policy.num_states(), policy.num_actions());
    xs.iter().zip(weights).all(|(x, &w)| {
        let cap = w / (1.0 - gamma);
        (0..ns).all(|s| {
            let total: f64 = (0..na).map(|a| x[s * na + a]).sum();
            (0..na).all(|a| {
                let (v, p) = (x[s * na + a], policy.prob(s, a));
                v <= cap * p + ENVELOPE_TOL
                    && v >= cap * (p - 1.0) + total - ENVELOPE_TOL
                    && v >= -ENVELOPE_TOL
                    && v <= total + ENVELOPE_TOL
            })
        })
    })
}

/// Whether the McCormick envelopes are tight at the weighted occupancies a
/// deterministic policy induces under every kernel sample.
pub fn mccormick_exactness_check(policy: &Policy, scenarios: &[(f64, MdpInstance)], gamma: f64) -> Result<bool> {
    if !policy.is_deterministic() {
        return Err(Error::invalid("McCormick check needs a deterministic policy"));
    }
    let xs = scenarios
        .iter()
        .map(|(w, m)| Ok(occupancy_of_policy(m, policy)?.0 * *w))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = scenarios.iter().map(|s| s.0).collect();
    Ok(mccormick_envelopes_hold(policy, &xs, &weights, gamma))
}

/// A policy performance measure under the true reward distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Mean,
    /// Lower `eps`-quantile of the return.
    Var(f64),
    /// Mean of the lower `eps`-tail of the return.
    Cvar(f64),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Mean => f.write_str("mean"),
            Metric::Var(e) => write!(f, "var@{e}"),
            Metric::Cvar(e) => write!(f, "cvar@{e}"),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let level = |v: &str| -> Result<f64> {
            let e: f64 = v.parse().map_err(|_| Error::invalid(format!("bad metric level in `{s}`")))?;
            if e > 0.0 && e <= 0.5 {
                Ok(e)
            } else {
                Err(Error::invalid(format!("metric level must lie in (0, 0.5], got {e}")))
            }
        };
        match s.split_once('@') {
            None if s == "mean" => Ok(Metric::Mean),
            Some(("var", e)) => Ok(Metric::Var(level(e)?)),
            Some(("cvar", e)) => Ok(Metric::Cvar(level(e)?)),
            _ => Err(Error::invalid(format!("unknown metric `{s}`"))),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The mean followed by VaR and CVaR at every threshold.
pub fn standard_metrics(thresholds: &[f64]) -> Vec<Metric> {
    let mut out = vec![Metric::Mean];
    out.extend(thresholds.iter().map(|&e| Metric::Var(e)));
    out.extend(thresholds.iter().map(|&e| Metric::Cvar(e)));
    out
}

/// Exact metrics of the return `r^T x` for a Gaussian reward `r`.
pub fn evaluate_policy_true(
    x: &OccupancyMeasure,
    truth: &EllipticalRef,
    metrics: &[Metric],
) -> Result<Vec<(Metric, f64)>> {
    if x.len() != truth.dim() {
        return Err(Error::invalid("occupancy and reward dimensions differ"));
    }
    match truth.generator() {
        Generator::Gaussian => {}
    }
    let mean = truth.mean().dot(&x.0);
    let spread = truth.sigma_norm(&x.0);
    metrics
        .iter()
        .map(|&m| {
            let v = match m {
                Metric::Mean => mean,
                Metric::Var(e) => {
                    check_level(e)?;
                    mean - upper_quantile(e)? * spread
                }
                Metric::Cvar(e) => {
                    check_level(e)?;
                    mean - std_normal_pdf(upper_quantile(e)?) / e * spread
                }
            };
            Ok((m, v))
        })
        .collect()
}

fn check_level(e: f64) -> Result<()> {
    if e > 0.0 && e <= 0.5 {
        Ok(())
    } else {
        Err(Error::domain(format!("metric level must lie in (0, 0.5], got {e}")))
    }
}

/// Empirical metrics of the sampled returns `R x`.
pub fn evaluate_policy_empirical(
    x: &OccupancyMeasure,
    samples: &SampleMatrix,
    metrics: &[Metric],
) -> Result<Vec<(Metric, f64)>> {
    if x.len() != samples.dim() {
        return Err(Error::invalid("occupancy and sample dimensions differ"));
    }
    let returns = samples.returns(&x.0);
    let mean = returns.mean();
    metrics
        .iter()
        .map(|&m| {
            let v = match m {
                Metric::Mean => mean,
                Metric::Var(e) => empirical_var_cvar(returns.as_slice(), e)?.0,
                Metric::Cvar(e) => empirical_var_cvar(returns.as_slice(), e)?.1,
            };
            Ok((m, v))
        })
        .collect()
}

/// Builds the coefficient-free problem once; models then only swap `(a, b)`.
pub fn base_problem(mdp: MdpInstance, reward: EllipticalRef) -> Result<ConicProblem> {
    ConicProblem::from_parts(mdp, reward, 0.0, 0.0)
}
