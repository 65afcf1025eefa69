//! Parisi measures for mixed p-spin and spherical spin-glass models.
//!
//! The crate evaluates the Parisi functional through a grid solution of the Parisi
//! PDE, computes the self-consistency curve `Gamma` through a tilted forward density,
//! minimizes over atomic order parameters and certifies candidates against the
//! known necessary conditions. The spherical side works with the Crisanti-Sommers
//! functional directly.

pub mod criteria;
pub mod error;
pub mod functional;
pub mod gamma;
mod mc;
pub mod measure;
pub mod mixture;
pub mod optimizer;
pub mod pde;
pub mod quad;
pub mod spherical;

pub use error::{Error, Result};
pub use measure::{discretize, metric_d, DensitySegment, GeneralMeasure, OrderParameter, RsbMeasure};
pub use functional::{parisi_value, recursion_oracle, PerturbationField};
pub use gamma::{gamma_report, GammaReport};
pub use mixture::Mixture;
pub use optimizer::{certify, minimize_adaptive, minimize_fixed_k, Certificate, OptimizerOptions, Verdict};
pub use pde::{solve_pde, GridParams, PdeSolution};
