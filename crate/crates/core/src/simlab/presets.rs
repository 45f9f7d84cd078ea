//! Fully wired scenarios and the three built-in experiment presets.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::{FamilyKind, FamilySpec, RegionSpec};
use crate::functionals::Functional;
use crate::observation::DataRange;
use crate::sequential::{check_alpha, GridSpec};
use crate::strategies::{Algorithm, StrategyOptions, StrategyState};
use crate::tail_models::PsiSpec;

use super::generators::{Generator, GeneratorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    MeanSdBeta,
    VarCvarBeta,
    Ar1Coeff,
}

impl PresetName {
    pub const ALL: [PresetName; 3] = [Self::MeanSdBeta, Self::VarCvarBeta, Self::Ar1Coeff];

    pub fn catalog() -> String {
        Self::ALL.map(|p| p.to_string()).join(", ")
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MeanSdBeta => "mean_sd_beta",
            Self::VarCvarBeta => "var_cvar_beta",
            Self::Ar1Coeff => "ar1_coeff",
        })
    }
}

impl FromStr for PresetName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.to_string() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`; available presets: {}", Self::catalog())))
    }
}

/// How the `0.8` in the AR(1) noise law `N(0, 0.8)` is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    #[default]
    Variance,
    StdDev,
}

impl FromStr for NoiseScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "variance" | "var" => Ok(Self::Variance),
            "sd" | "std" | "stddev" => Ok(Self::StdDev),
            _ => Err(Error::Parse(format!("noise scale `{s}` is not `variance` or `sd`"))),
        }
    }
}

impl fmt::Display for NoiseScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Variance => "variance",
            Self::StdDev => "sd",
        })
    }
}

/// Everything needed to run a test, a confidence sequence, or a Monte Carlo
/// study on generated data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    /// Data source for simulated runs; `None` when data comes from a file.
    pub generator: Option<GeneratorKind>,
    pub functional: Functional,
    pub null: Vec<f64>,
    pub family: FamilyKind,
    pub psi: Option<PsiSpec>,
    pub region: Option<RegionSpec>,
    /// Fixed bet scale for sub-ψ kinds.
    pub u: Option<f64>,
    pub margin: Option<f64>,
    /// Declared data range; defaults to the generator's support.
    pub data_range: Option<DataRange>,
    pub strategy: Algorithm,
    pub gradient_bound: Option<f64>,
    pub alpha: f64,
    pub horizon: usize,
    /// Candidate grid for surfaces and confidence sets.
    pub grid: GridSpec,
    /// Times at which the log-wealth surface is recorded.
    pub snapshots: Vec<usize>,
    /// Steps the confidence grid is run for.
    pub confseq_horizon: usize,
    /// Seed whose bundle illustrates the preset.
    pub demo_seed: u64,
}

impl Scenario {
    /// `N(0, 0.8)` AR(1) noise, with the scale convention made explicit.
    pub fn ar1_noise_sd(scale: NoiseScale) -> f64 {
        match scale {
            NoiseScale::Variance => 0.8f64.sqrt(),
            NoiseScale::StdDev => 0.8,
        }
    }

    pub fn preset(name: PresetName) -> Self {
        Self::preset_with_noise(name, NoiseScale::default())
    }

    pub fn preset_with_noise(name: PresetName, noise: NoiseScale) -> Self {
        let beta25 = GeneratorKind::IidBeta { a: 2.0, b: 5.0 };
        match name {
            PresetName::MeanSdBeta => Self {
                name: name.to_string(),
                generator: Some(beta25.clone()),
                functional: Functional::MeanSd,
                null: vec![0.4, 0.4],
                family: FamilyKind::BoundedIdentifiable,
                psi: None,
                region: None,
                u: None,
                margin: Some(0.5),
                data_range: None,
                strategy: Algorithm::Ftl,
                gradient_bound: None,
                alpha: 0.05,
                horizon: 500,
                grid: GridSpec::new(vec![(0.0, 0.6, 61), (0.0, 0.6, 61)]).expect("valid"),
                snapshots: vec![50],
                confseq_horizon: 50,
                demo_seed: 2,
            },
            PresetName::VarCvarBeta => Self {
                name: name.to_string(),
                generator: Some(beta25.clone()),
                functional: Functional::VarCvar { alpha0: 0.05 },
                null: vec![0.2, 0.1],
                family: FamilyKind::BoundedIdentifiable,
                psi: None,
                region: None,
                u: None,
                margin: Some(0.5),
                data_range: None,
                strategy: Algorithm::Ftl,
                gradient_bound: None,
                alpha: 0.05,
                horizon: 500,
                grid: GridSpec::new(vec![(0.0, 0.3, 61), (0.0, 0.3, 61)]).expect("valid"),
                snapshots: vec![50, 150],
                confseq_horizon: 150,
                demo_seed: 2,
            },
            PresetName::Ar1Coeff => Self {
                name: name.to_string(),
                generator: Some(GeneratorKind::Ar1 { beta: 0.5, noise_sd: Self::ar1_noise_sd(noise) }),
                functional: Functional::Regression { k: 1 },
                null: vec![0.65],
                family: FamilyKind::SubPsiIdentifiable,
                psi: Some(PsiSpec::gaussian(1.0).expect("valid")),
                region: Some(RegionSpec::Ball { radius: 5.0, center: None }),
                u: Some(1.0),
                margin: None,
                data_range: None,
                strategy: Algorithm::Ftl,
                gradient_bound: None,
                alpha: 0.05,
                horizon: 1000,
                grid: GridSpec::new(vec![(0.0, 1.0, 101)]).expect("valid"),
                snapshots: (1..=100).map(|k| 10 * k).collect(),
                confseq_horizon: 1000,
                demo_seed: 2,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        self.functional.validate()?;
        self.functional.check_param(&self.null)?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if let Some(g) = &self.generator {
            g.validate()?;
            if g.obs_dim() != self.functional.obs_dim() {
                return Err(Error::Config(format!(
                    "generator emits {}-dimensional observations but {} needs {}",
                    g.obs_dim(),
                    self.functional,
                    self.functional.obs_dim()
                )));
            }
        }
        if self.grid.dim() != self.functional.param_dim() {
            return Err(Error::Config(format!(
                "grid has {} axes but {} has {} parameters",
                self.grid.dim(),
                self.functional,
                self.functional.param_dim()
            )));
        }
        Ok(())
    }

    pub fn data_range(&self) -> DataRange {
        match (&self.data_range, &self.generator) {
            (Some(r), _) => r.clone(),
            (None, Some(g)) => g.support(),
            (None, None) => DataRange::unbounded(self.functional.obs_dim()),
        }
    }

    fn generator_kind(&self) -> Result<&GeneratorKind> {
        self.generator.as_ref().ok_or_else(|| Error::Config(format!("scenario `{}` has no data generator", self.name)))
    }

    /// True functional value under the generator.
    pub fn truth(&self) -> Result<Vec<f64>> {
        self.functional.true_value(&self.generator_kind()?.reference())
    }

    /// The same scenario with the null moved to the true value.
    pub fn under_null(&self) -> Result<Self> {
        let mut s = self.clone();
        s.null = self.truth()?;
        s.name = format!("{}_null", self.name);
        Ok(s)
    }

    /// Family for the configured null.
    pub fn family_spec(&self) -> Result<FamilySpec> {
        self.family_for(&self.null)
    }

    /// Family for an arbitrary null value (used by confidence grids).
    pub fn family_for(&self, null: &[f64]) -> Result<FamilySpec> {
        let mut b = FamilySpec::builder(self.family, self.functional, null.to_vec()).data_range(self.data_range());
        if let Some(p) = &self.psi {
            b = b.psi(p.clone());
        }
        if let Some(r) = &self.region {
            b = b.region(r.clone());
        }
        if let Some(u) = self.u {
            b = b.fixed_u(u);
        }
        if let Some(m) = self.margin {
            b = b.margin(m);
        }
        b.build()
    }

    pub fn strategy_options(&self) -> StrategyOptions {
        StrategyOptions { gradient_bound: self.gradient_bound, ..StrategyOptions::default() }
    }

    pub fn strategy(&self, fam: &FamilySpec, track_regret: bool) -> Result<StrategyState> {
        let opts = StrategyOptions { track_regret, ..self.strategy_options() };
        StrategyState::new(self.strategy, fam, &opts)
    }

    pub fn data(&self, seed: u64) -> Result<Generator> {
        Generator::new(self.generator_kind()?.clone(), seed)
    }

    /// Grid points at which a family can be built (e.g. `CVaR ≤ VaR`).
    pub fn admissible_grid(&self) -> Vec<Vec<f64>> {
        self.grid.points().into_iter().filter(|p| self.functional.check_param(p).is_ok()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_build() {
        for p in PresetName::ALL {
            let s = Scenario::preset(p);
            s.validate().unwrap();
            s.family_spec().unwrap();
            assert_eq!(p.to_string().parse::<PresetName>().unwrap(), p);
        }
    }

    #[test]
    fn unknown_preset_lists_catalog() {
        let e = "nope".parse::<PresetName>().unwrap_err().to_string();
        assert!(e.contains("mean_sd_beta") && e.contains("ar1_coeff"), "{e}");
    }

    #[test]
    fn preset_truths() {
        let t = Scenario::preset(PresetName::MeanSdBeta).truth().unwrap();
        assert!((t[0] - 2.0 / 7.0).abs() < 1e-12);
        assert!((t[1] - (10.0f64 / (49.0 * 8.0)).sqrt()).abs() < 1e-12);
        let t = Scenario::preset(PresetName::Ar1Coeff).truth().unwrap();
        assert_eq!(t, vec![0.5]);
    }

    #[test]
    fn var_cvar_grid_respects_order() {
        let s = Scenario::preset(PresetName::VarCvarBeta);
        let pts = s.admissible_grid();
        assert!(pts.iter().all(|p| p[1] <= p[0]));
        assert_eq!(pts.len(), 61 * 62 / 2);
    }
}
