//! Anytime-valid sequential tests and confidence sequences for elicitable
//! and identifiable functionals.
//!
//! The pieces fit together as follows:
//!
//! * [`functionals`]: scores `s(λ, x)` and identification functions `m(λ, x)`.
//! * [`tail_models`]: sub-ψ tail models and an exhaustive supermartingale checker.
//! * [`families`]: the four parametric test-supermartingale families L^θ.
//! * [`strategies`]: online convex optimisation picking the bets θ_t.
//! * [`sequential`]: Ville-threshold tests, set-valued tests, confidence grids.
//! * [`simlab`]: generators, experiment presets and the Monte Carlo harness.

pub mod discrete;
pub mod error;
pub mod families;
pub mod functionals;
mod numeric;
pub mod observation;
pub mod rng;
pub mod sequential;
pub mod simlab;
pub mod solver;
pub mod strategies;
pub mod tail_models;

pub use discrete::DiscreteLaw;
pub use error::{Error, Result};
pub use families::{FamilyKind, FamilySpec, Region, RegionSpec, ThetaDomain, UCoordinate};
pub use functionals::{Functional, ReferenceDistribution};
pub use observation::{DataRange, Observation};
pub use sequential::{ConfidenceGrid, GridSpec, RunOptions, TestOutcome, ThresholdMonitor};
pub use strategies::{Algorithm, StrategyOptions, StrategyState};
pub use tail_models::{PsiSpec, VarianceProcess};
