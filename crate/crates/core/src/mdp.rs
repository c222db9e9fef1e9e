//! Finite discounted MDPs in the occupancy-measure (dual LP) view.
//!
//! State-action pairs are flattened as `s * A + a` (zero based). The
//! occupancy polytope is `X = { x >= 0 : (E - gamma * Pbar) x = p0 }`, where
//! `E` sums the action block of each state and row `s` of `Pbar` collects the
//! probabilities of arriving in `s` from every pair.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Environment of a finite discounted MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct MdpInstance {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    p0: Vec<f64>,
    /// `kernel[(s * A + a) * S + s']`
    kernel: Vec<f64>,
}

/// On-disk layout of an instance file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    p0: Vec<f64>,
    kernel: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<MdpDocument> for MdpInstance {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        MdpInstance::new(doc.num_states, doc.num_actions, doc.gamma, doc.p0, doc.kernel)
    }
}

impl From<MdpInstance> for MdpDocument {
    fn from(mdp: MdpInstance) -> Self {
        let kernel = (0..mdp.num_states)
            .map(|s| {
                (0..mdp.num_actions)
                    .map(|a| mdp.transition(s, a).to_vec())
                    .collect()
            })
            .collect();
        MdpDocument {
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            gamma: mdp.gamma,
            p0: mdp.p0,
            kernel,
        }
    }
}

impl MdpInstance {
    /// Builds and validates an instance from a nested `[s][a][s']` kernel.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        p0: Vec<f64>,
        kernel: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if kernel.len() != num_states || kernel.iter().any(|row| row.len() != num_actions) {
            return Err(Error::invalid(format!(
                "kernel must have shape {num_states} x {num_actions} x {num_states}"
            )));
        }
        let mut flat = Vec::with_capacity(num_states * num_actions * num_states);
        for row in kernel.iter().flatten() {
            if row.len() != num_states {
                return Err(Error::invalid(format!(
                    "kernel rows must have length {num_states}, found {}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(num_states, num_actions, gamma, p0, flat)
    }

    /// Builds an instance from a flat kernel indexed `(s * A + a) * S + s'`.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        p0: Vec<f64>,
        kernel: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("an MDP needs at least one state and one action"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("discount must lie in (0, 1), got {gamma}")));
        }
        if p0.len() != num_states {
            return Err(Error::invalid(format!(
                "initial distribution has length {}, expected {num_states}",
                p0.len()
            )));
        }
        if p0.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("initial distribution must be strictly positive"));
        }
        let mass: f64 = p0.iter().sum();
        if (mass - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::invalid(format!("initial distribution sums to {mass}")));
        }
        if kernel.len() != num_states * num_actions * num_states {
            return Err(Error::invalid("flat kernel has the wrong length"));
        }
        for (pair, row) in kernel.chunks(num_states).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::invalid(format!(
                    "transition row for pair {pair} has a negative or non-finite entry"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!(
                    "transition row for pair {pair} sums to {total}"
                )));
            }
        }
        Ok(MdpInstance {
            num_states,
            num_actions,
            gamma,
            p0,
            kernel,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of state-action pairs, the dimension of an occupancy measure.
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    /// Next-state distribution of pair `(s, a)`.
    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.kernel[start..start + self.num_states]
    }

    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    /// Same environment with a different transition kernel (used for sampled kernels).
    pub fn with_kernel(&self, kernel: Vec<f64>) -> Result<Self> {
        Self::from_flat(
            self.num_states,
            self.num_actions,
            self.gamma,
            self.p0.clone(),
            kernel,
        )
    }

    pub fn flat_kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Total occupancy mass `1 / (1 - gamma)` carried by every feasible point.
    pub fn occupancy_mass(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }
}

/// Equality constraints of the occupancy polytope.
#[derive(Debug, Clone)]
pub struct ConstraintMatrices {
    pub e: DMatrix<f64>,
    pub pbar: DMatrix<f64>,
    pub amat: DMatrix<f64>,
    /// Column-wise nonzeros of `amat` for the solver's matrix-vector products.
    columns: Vec<Vec<(usize, f64)>>,
}

impl ConstraintMatrices {
    pub fn num_rows(&self) -> usize {
        self.amat.nrows()
    }

    pub fn num_cols(&self) -> usize {
        self.amat.ncols()
    }

    /// `out = Amat * x`
    pub fn apply_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for (j, col) in self.columns.iter().enumerate() {
            let xj = x[j];
            if xj != 0.0 {
                for &(i, v) in col {
                    out[i] += v * xj;
                }
            }
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_rows());
        self.apply_into(x, &mut out);
        out
    }

    /// `out = Amat^T * v`
    pub fn apply_transpose_into(&self, v: &DVector<f64>, out: &mut DVector<f64>) {
        for (j, col) in self.columns.iter().enumerate() {
            out[j] = col.iter().map(|&(i, a)| a * v[i]).sum();
        }
    }

    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_cols());
        self.apply_transpose_into(v, &mut out);
        out
    }

    /// `||Amat x - p0||_inf`
    pub fn feasibility_residual(&self, x: &DVector<f64>, p0: &[f64]) -> f64 {
        let ax = self.apply(x);
        ax.iter()
            .zip(p0)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Assembles `E`, `Pbar` and `Amat = E - gamma * Pbar`.
pub fn build_constraints(mdp: &MdpInstance) -> ConstraintMatrices {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let n = ns * na;
    let mut e = DMatrix::zeros(ns, n);
    let mut pbar = DMatrix::zeros(ns, n);
    let mut columns = Vec::with_capacity(n);
    for s in 0..ns {
        for a in 0..na {
            let j = mdp.pair_index(s, a);
            e[(s, j)] = 1.0;
            let mut col = Vec::new();
            for (next, &p) in mdp.transition(s, a).iter().enumerate() {
                pbar[(next, j)] = p;
            }
            for i in 0..ns {
                let v = e[(i, j)] - mdp.gamma * pbar[(i, j)];
                if v != 0.0 {
                    col.push((i, v));
                }
            }
            columns.push(col);
        }
    }
    let amat = &e - &pbar * mdp.gamma;
    ConstraintMatrices {
        e,
        pbar,
        amat,
        columns,
    }
}

/// Nonnegative vector over state-action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure(pub DVector<f64>);

impl OccupancyMeasure {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn mass(&self) -> f64 {
        self.0.sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Componentwise `max(x, 0)`.
    pub fn clamped(&self) -> OccupancyMeasure {
        OccupancyMeasure(self.0.map(|v| v.max(0.0)))
    }
}

/// Stationary randomized policy, one probability row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Policy {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for Policy {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Policy::new(rows)
    }
}

impl From<Policy> for Vec<Vec<f64>> {
    fn from(p: Policy) -> Self {
        p.rows
    }
}

impl Policy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || width == 0 {
            return Err(Error::invalid("policy must have at least one state and action"));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::invalid(format!("policy row {s} has the wrong width")));
            }
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::invalid(format!("policy row {s} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(Policy { rows })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Policy {
            rows: vec![vec![1.0 / num_actions as f64; num_actions]; num_states],
        }
    }

    /// Deterministic policy playing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        if let Some(&bad) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::invalid(format!("action {bad} out of range")));
        }
        let rows = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; num_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        Ok(Policy { rows })
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn num_actions(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.rows[s][a]
    }

    /// True when every row is a unit coordinate vector.
    pub fn is_deterministic(&self) -> bool {
        self.rows
            .iter()
            .all(|row| row.iter().all(|&p| p == 0.0 || p == 1.0))
    }

    /// Chosen action per state, if deterministic.
    pub fn actions(&self) -> Option<Vec<usize>> {
        if !self.is_deterministic() {
            return None;
        }
        Some(
            self.rows
                .iter()
                .map(|row| row.iter().position(|&p| p == 1.0).unwrap_or(0))
                .collect(),
        )
    }
}

/// Unique occupancy measure induced by `policy`: `x[s,a] = pi[s,a] * nu[s]`
/// with `(I - gamma * P_pi^T) nu = p0`.
pub fn occupancy_of_policy(mdp: &MdpInstance, policy: &Policy) -> Result<OccupancyMeasure> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    if policy.num_states() != ns || policy.num_actions() != na {
        return Err(Error::invalid(format!(
            "policy shape {}x{} does not match MDP {ns}x{na}",
            policy.num_states(),
            policy.num_actions()
        )));
    }
    // system[s', s] = delta - gamma * P_pi[s, s']
    let mut system = DMatrix::<f64>::identity(ns, ns);
    for s in 0..ns {
        for a in 0..na {
            let pi = policy.prob(s, a);
            if pi == 0.0 {
                continue;
            }
            for (next, &p) in mdp.transition(s, a).iter().enumerate() {
                system[(next, s)] -= mdp.gamma * pi * p;
            }
        }
    }
    let rhs = DVector::from_column_slice(&mdp.p0);
    let nu = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular state-visitation system".into()))?;
    let mut x = DVector::zeros(ns * na);
    for s in 0..ns {
        for a in 0..na {
            x[s * na + a] = policy.prob(s, a) * nu[s];
        }
    }
    Ok(OccupancyMeasure(x))
}

/// Normalizes each state's action block; rows with mass below `1e-14` become uniform.
pub fn policy_of_occupancy(x: &OccupancyMeasure, num_actions: usize) -> Result<Policy> {
    if num_actions == 0 || x.len() % num_actions != 0 {
        return Err(Error::invalid("occupancy length is not a multiple of the action count"));
    }
    let rows = x
        .as_slice()
        .chunks(num_actions)
        .map(|block| {
            let clipped: Vec<f64> = block.iter().map(|v| v.max(0.0)).collect();
            let total: f64 = clipped.iter().sum();
            if total < 1e-14 {
                vec![1.0 / num_actions as f64; num_actions]
            } else {
                clipped.iter().map(|v| v / total).collect()
            }
        })
        .collect();
    Ok(Policy { rows })
}

/// Output of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub values: DVector<f64>,
    pub policy: Policy,
    pub actions: Vec<usize>,
    pub sweeps: usize,
}

/// Value iteration for reward vector `r` over pairs.
///
/// Stops once `||v - T v||_inf <= tol * (1 - gamma) / (2 gamma)`, so the
/// greedy policy is `tol`-optimal (the threshold never drops below a few ulps of
/// `max |v|`). Greedy ties go to the lowest action index.
pub fn value_iteration(mdp: &MdpInstance, r: &[f64], tol: f64) -> Result<ValueIterationResult> {
    value_iteration_from(mdp, r, tol, None)
}

/// [`value_iteration`] warm-started from `initial` values.
pub fn value_iteration_from(
    mdp: &MdpInstance,
    r: &[f64],
    tol: f64,
    initial: Option<&DVector<f64>>,
) -> Result<ValueIterationResult> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    if r.len() != mdp.num_pairs() {
        return Err(Error::invalid("reward vector length does not match the MDP"));
    }
    let ns = mdp.num_states;
    let threshold = tol * (1.0 - mdp.gamma) / (2.0 * mdp.gamma);
    let mut v = match initial {
        Some(v0) if v0.len() == ns => v0.clone(),
        _ => DVector::zeros(ns),
    };
    let mut next = DVector::zeros(ns);
    let mut actions = vec![0usize; ns];
    let mut sweeps = 0usize;
    loop {
        let gap = bellman_sweep(mdp, r, &v, &mut next, &mut actions);
        sweeps += 1;
        std::mem::swap(&mut v, &mut next);
        // rounding can keep the gap a few ulps above a tiny absolute threshold
        let floor = 16.0 * f64::EPSILON * v.amax();
        if gap <= threshold.max(floor) {
            break;
        }
    }
    // v now holds T(v_prev); the greedy actions were computed against v_prev,
    // recompute them against the returned values for consistency.
    bellman_sweep(mdp, r, &v, &mut next, &mut actions);
    let policy = Policy::deterministic(&actions, mdp.num_actions)?;
    Ok(ValueIterationResult {
        values: v,
        policy,
        actions,
        sweeps,
    })
}

/// One Bellman update; returns `||T v - v||_inf`.
fn bellman_sweep(
    mdp: &MdpInstance,
    r: &[f64],
    v: &DVector<f64>,
    out: &mut DVector<f64>,
    actions: &mut [usize],
) -> f64 {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut gap = 0.0_f64;
    for s in 0..ns {
        let mut best = f64::NEG_INFINITY;
        let mut best_a = 0;
        for a in 0..na {
            let row = mdp.transition(s, a);
            let mut ev = 0.0;
            for (next, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    ev += p * v[next];
                }
            }
            let q = r[s * na + a] + mdp.gamma * ev;
            if q > best {
                best = q;
                best_a = a;
            }
        }
        out[s] = best;
        actions[s] = best_a;
        gap = gap.max((best - v[s]).abs());
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_state(gamma: f64, actions: usize) -> MdpInstance {
        MdpInstance::new(1, actions, gamma, vec![1.0], vec![vec![vec![1.0]; actions]]).unwrap()
    }

    fn swap_chain(gamma: f64) -> MdpInstance {
        MdpInstance::new(
            2,
            1,
            gamma,
            vec![0.5, 0.5],
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
        )
        .unwrap()
    }

    #[test]
    fn single_pair_constraint_is_one_minus_gamma() {
        let c = build_constraints(&single_state(0.9, 1));
        assert_relative_eq!(c.amat[(0, 0)], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn swap_kernel_constraint_matrix() {
        let c = build_constraints(&swap_chain(0.5));
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        assert_relative_eq!(c.amat, expected, epsilon = 1e-15);
        assert_relative_eq!(c.e.row_sum(), nalgebra::RowDVector::from_element(2, 1.0));
    }

    #[test]
    fn sparse_products_match_dense() {
        let mdp = MdpInstance::new(
            2,
            2,
            0.7,
            vec![0.3, 0.7],
            vec![
                vec![vec![0.2, 0.8], vec![1.0, 0.0]],
                vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            ],
        )
        .unwrap();
        let c = build_constraints(&mdp);
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]);
        assert_relative_eq!(c.apply(&x), &c.amat * &x, epsilon = 1e-14);
        let v = DVector::from_vec(vec![1.5, -0.25]);
        assert_relative_eq!(c.apply_transpose(&v), c.amat.transpose() * &v, epsilon = 1e-14);
    }

    #[test]
    fn occupancy_examples() {
        let x = occupancy_of_policy(&single_state(0.9, 1), &Policy::uniform(1, 1)).unwrap();
        assert_relative_eq!(x.0[0], 10.0, epsilon = 1e-12);
        let x = occupancy_of_policy(&swap_chain(0.5), &Policy::uniform(2, 1)).unwrap();
        assert_relative_eq!(x.0, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn policy_normalization() {
        let p = policy_of_occupancy(&OccupancyMeasure(DVector::from_vec(vec![10.0])), 1).unwrap();
        assert_eq!(p.rows(), &[vec![1.0]]);
        let p =
            policy_of_occupancy(&OccupancyMeasure(DVector::from_vec(vec![3.0, 1.0])), 2).unwrap();
        assert_eq!(p.rows(), &[vec![0.75, 0.25]]);
        let p = policy_of_occupancy(&OccupancyMeasure(DVector::from_vec(vec![0.0, 0.0])), 2)
            .unwrap();
        assert_eq!(p.rows(), &[vec![0.5, 0.5]]);
    }

    #[test]
    fn value_iteration_small_cases() {
        let vi = value_iteration(&single_state(0.9, 1), &[1.0], 1e-10).unwrap();
        assert_relative_eq!(vi.values[0], 10.0, epsilon = 1e-9);
        let vi = value_iteration(&single_state(0.5, 2), &[1.0, 2.0], 1e-10).unwrap();
        assert_relative_eq!(vi.values[0], 4.0, epsilon = 1e-9);
        assert_eq!(vi.actions, vec![1]);
    }

    #[test]
    fn ties_prefer_lowest_action() {
        let vi = value_iteration(&single_state(0.5, 3), &[0.0, 0.0, 0.0], 1e-10).unwrap();
        assert_eq!(vi.actions, vec![0]);
    }

    #[test]
    fn rejects_bad_instances() {
        assert!(MdpInstance::new(1, 1, 1.0, vec![1.0], vec![vec![vec![1.0]]]).is_err());
        assert!(MdpInstance::new(1, 1, 0.5, vec![1.0], vec![vec![vec![0.9]]]).is_err());
        assert!(MdpInstance::new(2, 1, 0.5, vec![1.0, 0.0], vec![vec![vec![1.0, 0.0]]; 2])
            .is_err());
        assert!(Policy::new(vec![vec![0.5, 0.6]]).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let mdp = swap_chain(0.5);
        let text = serde_json::to_string(&mdp).unwrap();
        assert!(text.contains("\"num_states\""));
        let back: MdpInstance = serde_json::from_str(&text).unwrap();
        assert_eq!(back, mdp);
    }
}
