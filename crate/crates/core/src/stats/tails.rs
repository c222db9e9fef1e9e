//! Student-t VaR/CVaR and chi-square quantiles by CDF inversion.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Student-t CDF with `dof` degrees of freedom.
pub fn t_cdf(dof: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let tail = 0.5 * beta_reg(0.5 * dof, 0.5, dof / (dof + t * t));
    if t < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Finds `x` in `[lo, hi]` with `f(x) = target` for increasing `f`.
fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn check_t_args(dof: f64, eps: f64) -> Result<()> {
    if !(dof > 1.0) || !dof.is_finite() {
        return Err(Error::domain(format!("degrees of freedom must exceed 1, got {dof}")));
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::domain(format!("risk threshold must lie in (0, 0.5], got {eps}")));
    }
    Ok(())
}

/// Lower `eps`-quantile of the standard Student-t distribution.
pub fn t_var(dof: f64, eps: f64) -> Result<f64> {
    check_t_args(dof, eps)?;
    if eps == 0.5 {
        return Ok(0.0);
    }
    let mut lo = -1.0;
    while t_cdf(dof, lo) > eps {
        lo *= 2.0;
        if lo < -1e300 {
            return Err(Error::Numerical("t quantile bracket diverged".into()));
        }
    }
    Ok(bisect_increasing(|t| t_cdf(dof, t), eps, lo, 0.0))
}

/// Expected value of the Student-t variable below its `eps`-quantile.
pub fn t_cvar(dof: f64, eps: f64) -> Result<f64> {
    let v = t_var(dof, eps)?;
    let log_scale = 0.5 * dof.ln() + ln_gamma(0.5 * (dof + 1.0))
        - eps.ln()
        - 0.5 * std::f64::consts::PI.ln()
        - (dof - 1.0).ln()
        - ln_gamma(0.5 * dof);
    let decay = (1.0 + v * v / dof).powf(-0.5 * (dof - 1.0));
    Ok(-log_scale.exp() * decay)
}

/// Chi-square CDF with `dim` degrees of freedom.
pub fn chi2_cdf(dim: usize, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(0.5 * dim as f64, 0.5 * x)
    }
}

/// `p`-quantile of the chi-square distribution with `dim` degrees of freedom.
pub fn chi2_quantile(dim: usize, p: f64) -> Result<f64> {
    if dim == 0 {
        return Err(Error::domain("chi-square needs at least one degree of freedom"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("chi-square quantile needs p in (0, 1), got {p}")));
    }
    let mut hi = dim as f64 + 1.0;
    while chi2_cdf(dim, hi) < p {
        hi *= 2.0;
    }
    Ok(bisect_increasing(|x| chi2_cdf(dim, x), p, 0.0, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::normal::{std_normal_pdf, std_normal_quantile};
    use approx::assert_abs_diff_eq;

    #[test]
    fn t_var_examples() {
        assert_eq!(t_var(3.0, 0.5).unwrap(), 0.0);
        // For dof = 2 the CDF inverts in closed form: t = (2p-1) / sqrt(2p(1-p)).
        let p: f64 = 0.1;
        let closed = (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt();
        assert_abs_diff_eq!(t_var(2.0, 0.1).unwrap(), closed, epsilon = 1e-9);
        assert_abs_diff_eq!(t_var(2.0, 0.1).unwrap(), -1.8856, epsilon = 1e-3);
        let v = t_var(7.5, 0.05).unwrap();
        assert_abs_diff_eq!(t_cdf(7.5, v), 0.05, epsilon = 1e-8);
        assert_abs_diff_eq!(
            t_var(1e6, 0.1).unwrap(),
            std_normal_quantile(0.1).unwrap(),
            epsilon = 1e-3
        );
        assert!(t_var(1.0, 0.1).is_err());
        assert!(t_var(3.0, 0.6).is_err());
    }

    #[test]
    fn t_cvar_matches_quadrature() {
        // Independent route: integrate r * density over (-inf, v] by substitution.
        for (dof, eps) in [(2.0, 0.1), (3.0, 0.1), (5.0, 0.05)] {
            let v = t_var(dof, eps).unwrap();
            let c = (ln_gamma(0.5 * (dof + 1.0))
                - 0.5 * (std::f64::consts::PI * dof).ln()
                - ln_gamma(0.5 * dof))
                .exp();
            // r = v - u / (1 - u), u in [0, 1)
            let steps = 400_000;
            let h = 1.0 / steps as f64;
            let mut acc = 0.0;
            for i in 0..steps {
                let u = (i as f64 + 0.5) * h;
                let r = v - u / (1.0 - u);
                let jac = 1.0 / ((1.0 - u) * (1.0 - u));
                acc += r * c * (1.0 + r * r / dof).powf(-0.5 * (dof + 1.0)) * jac * h;
            }
            let expected = acc / eps;
            let got = t_cvar(dof, eps).unwrap();
            assert!(
                ((got - expected) / expected).abs() < 2e-3,
                "dof={dof}: {got} vs {expected}"
            );
            assert!(got <= v);
        }
    }

    #[test]
    fn t_cvar_matches_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StudentT};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let dist = StudentT::new(3.0).unwrap();
        let n = 2_000_000;
        let mut draws: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        let tail = &draws[..n / 10];
        let mc = tail.iter().sum::<f64>() / tail.len() as f64;
        let got = t_cvar(3.0, 0.1).unwrap();
        assert!(((got - mc) / mc).abs() < 0.01, "{got} vs {mc}");
    }

    #[test]
    fn t_cvar_approaches_gaussian_tail() {
        let q = std_normal_quantile(0.1).unwrap();
        let gaussian = -std_normal_pdf(q) / 0.1;
        let got = t_cvar(30.0, 0.1).unwrap();
        assert!(((got - gaussian) / gaussian).abs() < 0.05);
    }

    #[test]
    fn chi2_examples() {
        let half = std_normal_quantile(0.75).unwrap().powi(2);
        assert_abs_diff_eq!(chi2_quantile(1, 0.5).unwrap(), half, epsilon = 1e-8);
        assert_abs_diff_eq!(chi2_quantile(1, 0.5).unwrap(), 0.4549, epsilon = 1e-3);
        assert_abs_diff_eq!(chi2_quantile(2, 0.99).unwrap(), -2.0 * 0.01_f64.ln(), epsilon = 1e-8);
        let mut prev = 0.0;
        for i in 1..20 {
            let q = chi2_quantile(7, i as f64 / 20.0).unwrap();
            assert!(q > prev);
            prev = q;
        }
        assert!(chi2_quantile(0, 0.5).is_err());
    }
}
