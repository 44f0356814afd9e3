//! Initial-transient analysis for one-dimensional reflected Brownian motion.

pub mod cli;
pub mod distributional;
pub mod error;
pub mod levelset;
pub mod model;
pub mod montecarlo;
pub mod mse;
pub mod poisson;
pub mod quad;
pub mod special;
pub mod svg;
pub mod transition;
pub mod validate;

pub use error::{Error, Result};
pub use model::{InitialDistribution, PerformanceMeasure, QueueParams, RbmParams, WeightFunction};
pub use quad::QuadSpec;
