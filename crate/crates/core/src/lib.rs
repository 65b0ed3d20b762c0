//! Pure-exploration linear bandits with confounded treatments.
//!
//! The experimenter chooses an instrument `z`, observes a treatment `x = Γᵀz + η` and an
//! outcome `y = xᵀθ + ε` whose noise is correlated with `η`, and must identify
//! `argmax_{w ∈ W} wᵀθ`. The crate provides the structural environments
//! ([`instances`]), instrumental-variable estimators with finite-time widths
//! ([`estimators`]), design solvers ([`design`]), the elimination algorithms and
//! baselines ([`algorithms`]), and a Monte-Carlo harness with a CLI ([`harness`]).

pub mod algorithms;
pub mod design;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod instances;
pub mod numerics;

pub use error::{Error, Result};
