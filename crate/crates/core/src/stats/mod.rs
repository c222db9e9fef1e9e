//! Probability numerics used by calibration, models and experiments.

pub mod elliptical;
pub mod normal;
pub mod tails;

pub use elliptical::{
    empirical_var_cvar, estimate_moments, sample_mvn, EllipticalRef, Generator, SampleMatrix,
    DEFAULT_EIG_FLOOR,
};
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile, std_normal_sf};
pub use tails::{chi2_cdf, chi2_quantile, t_cdf, t_cvar, t_var};
