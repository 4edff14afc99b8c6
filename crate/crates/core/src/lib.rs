//! Fixed-effects estimation of dynamic binary panel logit models.
//!
//! The conditional likelihood of the dynamic logit given the individual
//! total score still depends on the individual intercepts. This crate
//! replaces the model by a quadratic exponential approximation for which the
//! total score *is* sufficient, and maximizes the resulting conditional
//! likelihood. Two approximations are provided: the basic one, expanded at
//! the origin, and the improved one, expanded at a preliminary estimate of
//! the regression coefficients.
//!
//! ```
//! use dynlogit::{dgp::DesignSpec, estimators::{fit_improved, ImprovedMode, SolverConfig}};
//!
//! let spec = DesignSpec::benchmark(500, 3, 0.5, 7, 1);
//! let data = dynlogit::dgp::generate(&spec, 0).unwrap();
//! let fit = fit_improved(&data, &ImprovedMode::Dynamic, &SolverConfig::default()).unwrap();
//! assert!(fit.theta_hat.gamma.is_finite());
//! ```

pub mod cli;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod hk;
pub mod numeric;
pub mod quadexp;

pub use data::{FitResult, PanelDataset, PanelUnit, Theta};
pub use dgp::{DesignFamily, DesignSpec};
pub use error::{Error, Result};
pub use estimators::{
    confidence_interval, fit_basic, fit_improved, fit_two_lag, wald_test_gamma2, ImprovedMode,
    SolverConfig, TwoLagMode,
};
pub use harness::{run_design, EstimatorKind, HarnessOptions, MetricRow};
pub use hk::{fit_hk, KernelSpec};
