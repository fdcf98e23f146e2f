//! Robust nonlinear state estimation with unscented Kalman filters.
//!
//! The crate implements the standard unscented Kalman filter together with a
//! robust measurement update driven by the minimum error entropy with fiducial
//! points (MEEF) criterion, a blend of correntropy and quadratic error entropy.
//! The MEEF update degenerates into the MCC-UKF (`tau = 1`), the MEE-UKF
//! (`tau = 0`) and the plain UKF (`tau = 1`, infinite correntropy width), so
//! every baseline is a configuration of the same machinery.
//!
//! Around the update sit a modified Sage-Husa estimator for the noise
//! covariances ([`noise`]), an online kernel-parameter search ([`tuning`]),
//! diagnostics for the fixed-point iteration's contraction conditions
//! ([`convergence`]), and a facade that composes all of it into named
//! estimators ([`filter`]).

pub mod convergence;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod meef;
pub mod models;
pub mod noise;
pub mod tuning;
pub mod ukf;

pub use error::{Error, Result};
pub use filter::{EstimatorConfig, Filter, StepDiagnostics, Variant};
pub use meef::{CriterionConfig, KernelWidth};
pub use models::{MixtureNoise, RngStream, SystemModel, Ungm, Vehicle};
pub use ukf::{GaussianBelief, UtParams};

/// Dense dynamically sized matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense dynamically sized column vector.
pub type Vector = nalgebra::DVector<f64>;
