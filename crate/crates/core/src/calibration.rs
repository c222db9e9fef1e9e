//! Wasserstein radius to adjusted VaR threshold, for Gaussian references.
//!
//! A pessimistic calibration shrinks the nominal threshold `eps` to `eps_lo`
//! so that a chance constraint at `eps_lo` on the reference distribution
//! holds at `eps` for every distribution within radius `theta`. The optimistic
//! calibration enlarges it to `eps_hi`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{std_normal_pdf, std_normal_quantile, std_normal_sf, Generator};

/// Default bisection tolerance on the critical point.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Nominal threshold and ambiguity radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSpec {
    epsilon: f64,
    theta: f64,
    generator: Generator,
}

impl RiskSpec {
    pub fn new(epsilon: f64, theta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::domain(format!("risk threshold must lie in (0, 0.5), got {epsilon}")));
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::domain(format!("Wasserstein radius must be finite and >= 0, got {theta}")));
        }
        Ok(Self {
            epsilon,
            theta,
            generator: Generator::Gaussian,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn generator(&self) -> Generator {
        self.generator
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Pessimistic,
    Optimistic,
}

/// Outcome of a calibration.
///
/// `eta` is the critical quantile; the conic coefficient of the compiled
/// model is `eta` itself, which stays finite even when `threshold = 1 - Phi(eta)`
/// underflows to zero for very large radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibratedRisk {
    pub threshold: f64,
    pub eta: f64,
    pub direction: Direction,
}

/// `Phi^{-1}(1 - eps)`, evaluated on the lower tail for accuracy.
pub fn upper_quantile(eps: f64) -> Result<f64> {
    Ok(-std_normal_quantile(eps)?)
}

/// `eta (Phi(eta) - (1 - eps)) - (phi(q) - phi(eta))` with `q = Phi^{-1}(1 - eps)`.
///
/// The second term is the closed form of the generator integral between
/// `q^2/2` and `eta^2/2`.
pub fn h_pessimistic(eta: f64, eps: f64) -> Result<f64> {
    let q = upper_quantile(eps)?;
    if eta < q {
        return Err(Error::domain(format!("eta {eta} is below the nominal quantile {q}")));
    }
    Ok(h_unchecked(eta, eps, q))
}

fn h_unchecked(eta: f64, eps: f64, q: f64) -> f64 {
    eta * (eps - std_normal_sf(eta)) - (std_normal_pdf(q) - std_normal_pdf(eta))
}

/// Left side of the optimistic condition, decreasing on `eta <= q`.
fn v_optimistic(eta: f64, eps: f64, q: f64) -> f64 {
    eta * (eps - std_normal_sf(eta)) + (std_normal_pdf(eta) - std_normal_pdf(q))
}

/// Radius above which the optimistic threshold reaches 0.5.
pub fn optimistic_theta_limit(eps: f64) -> Result<f64> {
    RiskSpec::new(eps, 0.0)?;
    let q = upper_quantile(eps)?;
    Ok(v_optimistic(0.0, eps, q))
}

/// Smallest `eta >= q` with `h_pessimistic(eta) >= theta`.
pub fn calibrate_pessimistic(spec: &RiskSpec, tol: f64) -> Result<CalibratedRisk> {
    if !(tol > 0.0) {
        return Err(Error::domain("calibration tolerance must be positive"));
    }
    let (eps, theta) = (spec.epsilon, spec.theta);
    let q = upper_quantile(eps)?;
    if theta == 0.0 {
        return Ok(CalibratedRisk {
            threshold: eps,
            eta: q,
            direction: Direction::Pessimistic,
        });
    }
    let mut offset = 1.0;
    while h_unchecked(q + offset, eps, q) < theta {
        offset *= 2.0;
        if !offset.is_finite() {
            return Err(Error::Numerical("pessimistic calibration bracket diverged".into()));
        }
    }
    let (mut lo, mut hi) = (q, q + offset);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h_unchecked(mid, eps, q) >= theta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CalibratedRisk {
        threshold: std_normal_sf(hi),
        eta: hi,
        direction: Direction::Pessimistic,
    })
}

/// Smallest `eta <= q` with `V(eta) <= theta`.
///
/// Fails with [`Error::CalibrationOutOfRange`] when the adjusted threshold is
/// 0.5 or more, where the optimistic cone constraint stops being convex.
pub fn calibrate_optimistic(spec: &RiskSpec, tol: f64) -> Result<CalibratedRisk> {
    if !(tol > 0.0) {
        return Err(Error::domain("calibration tolerance must be positive"));
    }
    let (eps, theta) = (spec.epsilon, spec.theta);
    let q = upper_quantile(eps)?;
    let eta = if theta == 0.0 {
        q
    } else {
        let mut offset = 1.0;
        while v_optimistic(q - offset, eps, q) <= theta {
            offset *= 2.0;
            if !offset.is_finite() {
                return Err(Error::Numerical("optimistic calibration bracket diverged".into()));
            }
        }
        let (mut lo, mut hi) = (q - offset, q);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if v_optimistic(mid, eps, q) <= theta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let threshold = if theta == 0.0 { eps } else { std_normal_sf(eta) };
    if eta <= 0.0 {
        return Err(Error::CalibrationOutOfRange {
            epsilon: eps,
            theta,
            threshold,
        });
    }
    Ok(CalibratedRisk {
        threshold,
        eta,
        direction: Direction::Optimistic,
    })
}

/// Radius whose pessimistic calibration at `eps` yields `target`.
pub fn theta_of_pessimistic(eps: f64, target: f64) -> Result<f64> {
    RiskSpec::new(eps, 0.0)?;
    if !(target > 0.0 && target <= eps) {
        return Err(Error::domain(format!(
            "adjusted threshold must lie in (0, {eps}], got {target}"
        )));
    }
    if target == eps {
        return Ok(0.0);
    }
    let q = upper_quantile(eps)?;
    let eta = upper_quantile(target)?.max(q);
    Ok(h_unchecked(eta, eps, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Composite Simpson rule for `int_lo^hi k e^{-z} dz`.
    fn generator_integral(lo: f64, hi: f64) -> f64 {
        let n = 2000;
        let h = (hi - lo) / n as f64;
        let k = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let f = |z: f64| k * (-z).exp();
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + i as f64 * h);
        }
        acc * h / 3.0
    }

    /// Lemma-style condition assembled from independent pieces.
    fn h_by_quadrature(eta: f64, eps: f64) -> f64 {
        let q = -std_normal_quantile(eps).unwrap();
        let cdf = 1.0 - std_normal_sf(eta);
        eta * (cdf - (1.0 - eps)) - generator_integral(q * q / 2.0, eta * eta / 2.0)
    }

    #[test]
    fn h_examples() {
        let q = -std_normal_quantile(0.1).unwrap();
        assert_abs_diff_eq!(h_pessimistic(q, 0.1).unwrap(), 0.0, epsilon = 1e-15);
        let h = h_pessimistic(1.5, 0.1).unwrap();
        assert_abs_diff_eq!(h, 0.00381, epsilon = 1e-5);
        assert_abs_diff_eq!(h, h_by_quadrature(1.5, 0.1), epsilon = 1e-10);
        assert!(h_pessimistic(1.0, 0.1).is_err());
        let mut prev = -1.0;
        for i in 0..50 {
            let v = h_pessimistic(q + 0.1 * i as f64, 0.1).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn pessimistic_examples() {
        let c = calibrate_pessimistic(&RiskSpec::new(0.1, 0.0).unwrap(), DEFAULT_TOL).unwrap();
        assert_eq!(c.threshold, 0.1);
        let theta = h_by_quadrature(1.5, 0.1);
        let c = calibrate_pessimistic(&RiskSpec::new(0.1, theta).unwrap(), DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(c.eta, 1.5, epsilon = 1e-8);
        assert_abs_diff_eq!(c.threshold, 0.0668, epsilon = 1e-4);
        let mut prev = 1.0;
        for i in 0..=10 {
            let c = calibrate_pessimistic(&RiskSpec::new(0.1, 0.01 * i as f64).unwrap(), DEFAULT_TOL)
                .unwrap();
            assert!(c.threshold <= prev && c.threshold <= 0.1);
            prev = c.threshold;
        }
    }

    #[test]
    fn huge_radius_keeps_finite_eta() {
        let c = calibrate_pessimistic(&RiskSpec::new(0.05, 18.0).unwrap(), DEFAULT_TOL).unwrap();
        assert!(c.eta.is_finite() && c.eta > 100.0);
        assert!(h_pessimistic(c.eta, 0.05).unwrap() >= 18.0);
    }

    #[test]
    fn optimistic_examples() {
        let c = calibrate_optimistic(&RiskSpec::new(0.1, 0.0).unwrap(), DEFAULT_TOL).unwrap();
        assert_eq!(c.threshold, 0.1);
        let q = -std_normal_quantile(0.1).unwrap();
        let limit = optimistic_theta_limit(0.1).unwrap();
        let mut prev = 0.1;
        for i in 1..20 {
            let theta = limit * i as f64 / 20.0;
            let c = calibrate_optimistic(&RiskSpec::new(0.1, theta).unwrap(), DEFAULT_TOL).unwrap();
            assert!(c.threshold > prev && c.threshold < 0.5);
            assert!(v_optimistic(c.eta, 0.1, q) <= theta);
            assert!(v_optimistic(c.eta - 1e-8, 0.1, q) > theta);
            prev = c.threshold;
        }
        // threshold radius located by bisection, independently of the closed form
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match calibrate_optimistic(&RiskSpec::new(0.1, mid).unwrap(), DEFAULT_TOL) {
                Ok(_) => lo = mid,
                Err(_) => hi = mid,
            }
        }
        assert_abs_diff_eq!(lo, limit, epsilon = 1e-8);
        let err = calibrate_optimistic(&RiskSpec::new(0.1, limit * 1.01).unwrap(), DEFAULT_TOL);
        assert!(matches!(err, Err(Error::CalibrationOutOfRange { .. })));
    }

    #[test]
    fn theta_inverse_examples() {
        assert_eq!(theta_of_pessimistic(0.1, 0.1).unwrap(), 0.0);
        let target = std_normal_sf(1.5);
        assert_abs_diff_eq!(theta_of_pessimistic(0.1, target).unwrap(), 0.00381, epsilon = 1e-5);
        let mut prev = -1.0;
        for i in (1..=20).rev() {
            let t = theta_of_pessimistic(0.1, 0.1 * i as f64 / 20.0).unwrap();
            assert!(t > prev);
            prev = t;
        }
        assert!(theta_of_pessimistic(0.1, 0.2).is_err());
    }

    #[test]
    fn roundtrip_grid() {
        for eps in [0.05, 0.1, 0.15] {
            for i in 1..=20 {
                let target = eps * i as f64 / 20.0;
                let theta = theta_of_pessimistic(eps, target).unwrap();
                let c = calibrate_pessimistic(&RiskSpec::new(eps, theta).unwrap(), DEFAULT_TOL).unwrap();
                assert_abs_diff_eq!(c.threshold, target, epsilon = 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn closed_form_integral(a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            let closed = std_normal_pdf(a) - std_normal_pdf(b);
            prop_assert!((closed - generator_integral(a * a / 2.0, b * b / 2.0)).abs() <= 1e-9);
        }

        #[test]
        fn ordering(eps in 0.01f64..0.45, theta in 0.0f64..1.0) {
            let spec = RiskSpec::new(eps, theta).unwrap();
            let lo = calibrate_pessimistic(&spec, DEFAULT_TOL).unwrap();
            prop_assert!(lo.threshold <= eps);
            if let Ok(hi) = calibrate_optimistic(&spec, DEFAULT_TOL) {
                prop_assert!(hi.threshold >= eps && hi.threshold < 0.5);
                prop_assert!(hi.eta <= lo.eta);
            }
        }
    }
}
