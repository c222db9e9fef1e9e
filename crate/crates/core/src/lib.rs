//! Risk-averse Markov decision processes under Wasserstein reward ambiguity.

pub mod error;
pub mod linalg;
pub mod mdp;
pub mod solver;
pub mod stats;
pub mod calibration;
pub mod frank_wolfe;
pub mod io;
pub mod experiments;
pub mod models;
pub mod cli;

pub use error::{Error, Result};
