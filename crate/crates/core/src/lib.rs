//! Simulation and verification tools for the spatial logistic birth–death
//! model: particles die at rate `m + Σ a⁻(x − y)` and place offspring with
//! density `a⁺` around themselves.

pub mod configspace;
pub mod error;
pub mod kernels;
pub mod kinetic;
pub mod linalg;
pub mod estimators;
pub mod hierarchy;
pub mod operators;
pub mod simulator;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// The guide in `book/` is compiled here so that its snippets run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/configurations.md")]
    mod configurations {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/hierarchy.md")]
    mod hierarchy {}
    #[doc = include_str!("../../../book/src/kinetic.md")]
    mod kinetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
