//! Nonparametric tests of the Markov property for discretely sampled
//! diffusions: direct against composed two-step transition estimates,
//! calibrated by plug-in asymptotics or an OU residual bootstrap.

pub mod bandwidth;
pub mod bootstrap;
pub mod descriptive;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod kernels;
pub mod models;
pub mod rng;
pub mod stats;

pub use error::{MarkovError, Result};

// Book chapters run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/bandwidths.md")]
    mod bandwidths {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/bootstrap.md")]
    mod bootstrap {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
