//! Flat `key = value` run configuration.
//!
//! Values are layered with precedence command line > config file > preset
//! defaults, then resolved into a typed [`RunConfig`]. The resolved config is
//! written back out as `config.txt` in canonical form, so passing that file
//! to `--config` reproduces the run byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anytime_core::simlab::{GeneratorKind, NoiseScale, PresetName, Scenario};
use anytime_core::{Algorithm, DataRange, FamilyKind, Functional, GridSpec, PsiSpec, RegionSpec};

use crate::error::CliError;

pub type Layer = BTreeMap<String, String>;

/// Every key the configuration understands.
pub const KEYS: &[&str] = &[
    "preset",
    "generator",
    "noise_scale",
    "functional",
    "null",
    "family",
    "psi",
    "region",
    "u",
    "margin",
    "range",
    "strategy",
    "gradient_bound",
    "alpha",
    "seed",
    "horizon",
    "grid",
    "snapshots",
    "confseq_horizon",
    "data",
    "out",
    "continue",
    "reps",
    "horizons",
    "under_null",
    "regret",
    "coverage",
];

/// Parses a config file body. Blank lines and `#` comments are ignored.
pub fn parse_file(text: &str, origin: &str) -> Result<Layer, CliError> {
    let mut out = Layer::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`, got `{line}`", i + 1)))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            return Err(CliError::Config(format!("{origin}:{}: unknown key `{k}`", i + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_usizes(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Defaults contributed by a preset.
fn preset_layer(sc: &Scenario, name: PresetName) -> Layer {
    let mut l = Layer::new();
    l.insert("preset".into(), name.to_string());
    l.insert("functional".into(), sc.functional.to_string());
    l.insert("null".into(), fmt_vec(&sc.null));
    l.insert("family".into(), sc.family.to_string());
    if let Some(p) = &sc.psi {
        l.insert("psi".into(), p.to_string());
    }
    if let Some(r) = &sc.region {
        l.insert("region".into(), r.to_string());
    }
    if let Some(u) = sc.u {
        l.insert("u".into(), u.to_string());
    }
    if let Some(m) = sc.margin {
        l.insert("margin".into(), m.to_string());
    }
    l.insert("strategy".into(), sc.strategy.to_string());
    l.insert("alpha".into(), sc.alpha.to_string());
    l.insert("seed".into(), sc.demo_seed.to_string());
    l.insert("horizon".into(), sc.horizon.to_string());
    l.insert("grid".into(), sc.grid.to_string());
    l.insert("snapshots".into(), fmt_usizes(&sc.snapshots));
    l.insert("confseq_horizon".into(), sc.confseq_horizon.to_string());
    l
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| CliError::Config(format!("{key} = {v}: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("{key} = {v}: expected true or false"))),
    }
}

/// Where observations come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Generator,
    Stdin,
    Csv(PathBuf),
}

/// A fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub data: DataSource,
    pub seed: u64,
    pub out: PathBuf,
    pub continue_after_rejection: bool,
    pub reps: usize,
    pub horizons: Vec<usize>,
    pub under_null: bool,
    pub regret: bool,
    pub coverage: bool,
    /// Canonical key/value form of everything above.
    pub resolved: Layer,
}

impl RunConfig {
    /// Merges `file` over preset defaults and `cli` over both, then resolves.
    pub fn resolve(file: &Layer, cli: &Layer) -> Result<Self, CliError> {
        let pick = |k: &str| cli.get(k).or_else(|| file.get(k)).cloned();
        let noise: NoiseScale = match pick("noise_scale") {
            Some(v) => parse("noise_scale", &v)?,
            None => NoiseScale::default(),
        };
        let preset = pick("preset").map(|v| v.trim().parse::<PresetName>().map_err(CliError::from)).transpose()?;
        let mut merged = match preset {
            Some(p) => preset_layer(&Scenario::preset_with_noise(p, noise), p),
            None => Layer::new(),
        };
        merged.extend(file.clone());
        merged.extend(cli.clone());
        let get = |k: &str| merged.get(k).map(String::as_str).filter(|v| !v.is_empty());

        let functional: Functional = match get("functional") {
            Some(v) => parse("functional", v)?,
            None => return Err(CliError::Config("no functional given (use --functional or --preset)".into())),
        };
        let null: Vec<f64> = match get("null") {
            Some(v) => parse_list("null", v)?,
            None => return Err(CliError::Config("no null value given (use --null or --preset)".into())),
        };
        if null.len() != functional.param_dim() {
            return Err(CliError::Config(format!(
                "null has {} values but {functional} has {} parameters",
                null.len(),
                functional.param_dim()
            )));
        }
        let family: FamilyKind = match get("family") {
            Some(v) => parse("family", v)?,
            None => {
                if functional.has_score() {
                    FamilyKind::BoundedElicitable
                } else {
                    FamilyKind::BoundedIdentifiable
                }
            }
        };
        let generator: Option<GeneratorKind> = match (get("generator"), preset) {
            (Some(v), _) => Some(parse("generator", v)?),
            (None, Some(p)) => Scenario::preset_with_noise(p, noise).generator,
            (None, None) => None,
        };
        let psi: Option<PsiSpec> = get("psi").map(|v| parse("psi", v)).transpose()?;
        let region: Option<RegionSpec> = get("region").map(|v| parse("region", v)).transpose()?;
        let u: Option<f64> = get("u").map(|v| parse("u", v)).transpose()?;
        let margin: Option<f64> = get("margin").map(|v| parse("margin", v)).transpose()?;
        let data_range: Option<DataRange> = get("range").map(|v| parse("range", v)).transpose()?;
        let strategy: Algorithm = get("strategy").map(|v| parse("strategy", v)).transpose()?.unwrap_or(Algorithm::Ftl);
        let gradient_bound: Option<f64> = get("gradient_bound").map(|v| parse("gradient_bound", v)).transpose()?;
        let alpha: f64 = get("alpha").map(|v| parse("alpha", v)).transpose()?.unwrap_or(0.05);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CliError::Config(format!("alpha = {alpha}: must lie strictly between 0 and 1")));
        }
        let seed: u64 = get("seed").map(|v| parse("seed", v)).transpose()?.unwrap_or(0);
        let horizon: usize = get("horizon").map(|v| parse("horizon", v)).transpose()?.unwrap_or(1000);
        let grid: GridSpec = match get("grid") {
            Some(v) => parse("grid", v)?,
            None => GridSpec::new(null.iter().map(|c| (c - 1.0, c + 1.0, GridSpec::DEFAULT_POINTS)).collect())
                .map_err(|e| CliError::Config(e.to_string()))?,
        };
        let snapshots: Vec<usize> = match get("snapshots") {
            Some(v) => parse_list("snapshots", v)?,
            None => vec![horizon],
        };
        let data = match get("data") {
            None => DataSource::Generator,
            Some("-") => DataSource::Stdin,
            Some(p) => DataSource::Csv(PathBuf::from(p)),
        };
        if data == DataSource::Generator && generator.is_none() {
            return Err(CliError::Config("no data source: give --data <csv|->, --generator, or --preset".into()));
        }
        let out = PathBuf::from(get("out").unwrap_or("."));
        let continue_after_rejection = get("continue").map(|v| parse_bool("continue", v)).transpose()?.unwrap_or(false);
        let reps: usize = get("reps").map(|v| parse("reps", v)).transpose()?.unwrap_or(200);
        if reps == 0 {
            return Err(CliError::Config("reps must be at least 1".into()));
        }
        let horizons: Vec<usize> = match get("horizons") {
            Some(v) => parse_list("horizons", v)?,
            None => vec![horizon],
        };
        let under_null = get("under_null").map(|v| parse_bool("under_null", v)).transpose()?.unwrap_or(false);
        let regret = get("regret").map(|v| parse_bool("regret", v)).transpose()?.unwrap_or(false);
        let coverage = get("coverage").map(|v| parse_bool("coverage", v)).transpose()?.unwrap_or(false);

        let confseq_horizon: usize =
            get("confseq_horizon").map(|v| parse("confseq_horizon", v)).transpose()?.unwrap_or(horizon);
        let name = match preset {
            Some(p) => p.to_string(),
            None => "custom".to_string(),
        };
        let mut scenario = Scenario {
            name,
            generator,
            functional,
            null,
            family,
            psi,
            region,
            u,
            margin,
            data_range,
            strategy,
            gradient_bound,
            alpha,
            horizon,
            grid,
            snapshots,
            confseq_horizon,
            demo_seed: seed,
        };
        scenario.validate().map_err(CliError::Core)?;
        scenario.data_range = Some(scenario.data_range());

        let mut resolved = Layer::new();
        let mut put = |k: &str, v: String| {
            resolved.insert(k.to_string(), v);
        };
        if let Some(p) = preset {
            put("preset", p.to_string());
            put("noise_scale", noise.to_string());
        }
        if let Some(g) = &scenario.generator {
            put("generator", g.to_string());
        }
        put("functional", scenario.functional.to_string());
        put("null", fmt_vec(&scenario.null));
        put("family", scenario.family.to_string());
        if let Some(p) = &scenario.psi {
            put("psi", p.to_string());
        }
        if let Some(r) = &scenario.region {
            put("region", r.to_string());
        }
        if let Some(u) = scenario.u {
            put("u", u.to_string());
        }
        if let Some(m) = scenario.margin {
            put("margin", m.to_string());
        }
        put("range", scenario.data_range().to_string());
        put("strategy", scenario.strategy.to_string());
        if let Some(g) = scenario.gradient_bound {
            put("gradient_bound", g.to_string());
        }
        put("alpha", alpha.to_string());
        put("seed", seed.to_string());
        put("horizon", horizon.to_string());
        put("grid", scenario.grid.to_string());
        put("snapshots", fmt_usizes(&scenario.snapshots));
        put("confseq_horizon", scenario.confseq_horizon.to_string());
        put(
            "data",
            match &data {
                DataSource::Generator => String::new(),
                DataSource::Stdin => "-".into(),
                DataSource::Csv(p) => p.display().to_string(),
            },
        );
        put("out", out.display().to_string());
        put("continue", continue_after_rejection.to_string());
        put("reps", reps.to_string());
        put("horizons", fmt_usizes(&horizons));
        put("under_null", under_null.to_string());
        put("regret", regret.to_string());
        put("coverage", coverage.to_string());

        Ok(Self {
            scenario,
            data,
            seed,
            out,
            continue_after_rejection,
            reps,
            horizons,
            under_null,
            regret,
            coverage,
            resolved,
        })
    }

    /// Canonical `config.txt` body.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.resolved {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
