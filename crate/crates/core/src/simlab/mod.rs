//! Simulation lab: seeded generators, the built-in experiment presets, the
//! figure-backing bundles and the Monte Carlo harness.

mod bundle;
mod generators;
mod montecarlo;
mod presets;

pub use bundle::{run_scenario, Bundle, BundleSummary};
pub use generators::{generate, Generator, GeneratorKind};
pub use montecarlo::{
    monte_carlo, run_replication, summarize, wilson, McConfig, McSummary, RateRow, RegretRow, Replication, MARGIN_Z,
    MIN_REPLICATIONS,
};
pub use presets::{NoiseScale, PresetName, Scenario};

use crate::error::Result;

/// Runs a preset on `seed` (defaulting to its demo seed).
pub fn run_preset(name: PresetName, seed: Option<u64>) -> Result<Bundle> {
    let sc = Scenario::preset(name);
    run_scenario(&sc, seed.unwrap_or(sc.demo_seed))
}
