//! Monte Carlo harness: ever-rejection rates, rejection times, regret slopes
//! and coverage, with per-replication seeds derived from a master seed.
//!
//! Replications run on the rayon pool and are collected in replication
//! order, so every summary is bit-identical regardless of thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::presets::Scenario;

/// Normal quantile used for the reported binomial margins (two-sided 99%).
pub const MARGIN_Z: f64 = 2.576;

/// Replication count below which summaries are flagged as underpowered.
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub scenario: Scenario,
    pub replications: usize,
    /// Checkpoint horizons (sorted ascending); the largest is the run length.
    pub horizons: Vec<usize>,
    pub master_seed: u64,
    /// Compute `Regret_T / T` at each checkpoint (costly for non-aggregated families).
    pub regret: bool,
    /// Also test the true value and report how often it is never rejected.
    pub coverage: bool,
}

impl McConfig {
    pub fn new(scenario: Scenario, replications: usize, horizons: Vec<usize>, master_seed: u64) -> Self {
        Self { scenario, replications, horizons, master_seed, regret: false, coverage: false }
    }

    fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) || !self.horizons.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("horizons must be nonempty, positive and strictly increasing".into()));
        }
        Ok(())
    }

    pub fn seed(&self, rep: usize) -> u64 {
        derive_seed(self.master_seed, &self.scenario.name, rep as u64)
    }
}

/// Result of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub rep: usize,
    pub seed: u64,
    pub rejected_at: Option<usize>,
    /// `log W_T` at each checkpoint.
    pub log_wealth: Vec<f64>,
    /// `Regret_T` at each checkpoint, when requested.
    pub regret: Option<Vec<f64>>,
    /// First time the true value was rejected, when coverage is requested.
    pub truth_rejected_at: Option<Option<usize>>,
}

/// Runs one replication of the scenario.
pub fn run_replication(cfg: &McConfig, rep: usize) -> Result<Replication> {
    let sc = &cfg.scenario;
    let seed = cfg.seed(rep);
    let horizon = *cfg.horizons.last().expect("validated");
    let fam = sc.family_spec()?;
    let mut strat = sc.strategy(&fam, cfg.regret)?;
    let log_thr = (1.0 / sc.alpha).ln();
    let mut rejected_at = None;
    let mut log_wealth = Vec::with_capacity(cfg.horizons.len());
    let mut regret = cfg.regret.then(|| Vec::with_capacity(cfg.horizons.len()));
    let mut next = 0;

    let mut truth = if cfg.coverage {
        let f = sc.family_for(&sc.truth()?)?;
        let s = sc.strategy(&f, false)?;
        Some((f, s, None))
    } else {
        None
    };

    for (i, x) in sc.data(seed)?.take(horizon).enumerate() {
        let t = i + 1;
        strat.step(&fam, &x)?;
        if rejected_at.is_none() && strat.log_wealth() > log_thr {
            rejected_at = Some(t);
        }
        if let Some((f, s, at)) = truth.as_mut() {
            s.step(f, &x)?;
            if at.is_none() && s.log_wealth() > log_thr {
                *at = Some(t);
            }
        }
        if t == cfg.horizons[next] {
            log_wealth.push(strat.log_wealth());
            if let Some(r) = regret.as_mut() {
                r.push(strat.regret(&fam)?);
            }
            next += 1;
        }
    }
    Ok(Replication { rep, seed, rejected_at, log_wealth, regret, truth_rejected_at: truth.map(|(_, _, at)| at) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub horizon: usize,
    pub count: usize,
    pub frequency: f64,
    /// Wilson score interval at the [`MARGIN_Z`] level.
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRow {
    pub horizon: usize,
    pub mean_regret: f64,
    pub max_regret: f64,
    pub mean_regret_over_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub scenario: String,
    pub replications: usize,
    pub underpowered: bool,
    pub master_seed: u64,
    pub alpha: f64,
    /// `MARGIN_Z · sqrt(α(1−α)/n)`, the allowance over α used for Type-I checks.
    pub type1_margin: f64,
    pub rejection: Vec<RateRow>,
    pub median_rejection_time: Option<f64>,
    pub regret: Option<Vec<RegretRow>>,
    pub coverage: Option<RateRow>,
    pub mean_log_wealth: Vec<f64>,
}

pub fn wilson(count: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = count as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn rate(horizon: usize, count: usize, n: usize) -> RateRow {
    RateRow { horizon, count, frequency: count as f64 / n as f64, ci: wilson(count, n, MARGIN_Z) }
}

/// Runs all replications and aggregates them.
pub fn monte_carlo(cfg: &McConfig) -> Result<(McSummary, Vec<Replication>)> {
    cfg.validate()?;
    let reps: Vec<Replication> =
        (0..cfg.replications).into_par_iter().map(|r| run_replication(cfg, r)).collect::<Result<_>>()?;
    Ok((summarize(cfg, &reps), reps))
}

pub fn summarize(cfg: &McConfig, reps: &[Replication]) -> McSummary {
    let n = reps.len();
    let alpha = cfg.scenario.alpha;
    let rejection = cfg
        .horizons
        .iter()
        .map(|&h| rate(h, reps.iter().filter(|r| r.rejected_at.is_some_and(|t| t <= h)).count(), n))
        .collect();
    let mut times: Vec<usize> = reps.iter().filter_map(|r| r.rejected_at).collect();
    times.sort_unstable();
    let median_rejection_time = match times.len() {
        0 => None,
        k if k % 2 == 1 => Some(times[k / 2] as f64),
        k => Some(0.5 * (times[k / 2 - 1] + times[k / 2]) as f64),
    };
    let regret = cfg.regret.then(|| {
        cfg.horizons
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let vals: Vec<f64> = reps.iter().filter_map(|r| r.regret.as_ref().map(|v| v[i])).collect();
                let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
                RegretRow {
                    horizon: h,
                    mean_regret: mean,
                    max_regret: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean_regret_over_t: mean / h as f64,
                }
            })
            .collect()
    });
    let horizon = *cfg.horizons.last().unwrap_or(&0);
    let coverage = cfg.coverage.then(|| {
        let covered = reps.iter().filter(|r| matches!(r.truth_rejected_at, Some(None))).count();
        rate(horizon, covered, n)
    });
    let mean_log_wealth =
        (0..cfg.horizons.len()).map(|i| reps.iter().map(|r| r.log_wealth[i]).sum::<f64>() / n.max(1) as f64).collect();
    McSummary {
        scenario: cfg.scenario.name.clone(),
        replications: n,
        underpowered: n < MIN_REPLICATIONS,
        master_seed: cfg.master_seed,
        alpha,
        type1_margin: MARGIN_Z * (alpha * (1.0 - alpha) / n.max(1) as f64).sqrt(),
        rejection,
        median_rejection_time,
        regret,
        coverage,
        mean_log_wealth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_estimate() {
        let (lo, hi) = wilson(10, 200, MARGIN_Z);
        assert!(lo < 0.05 && 0.05 < hi);
        assert_eq!(wilson(0, 1, MARGIN_Z).0, 0.0);
        assert_eq!(wilson(1, 1, MARGIN_Z).1, 1.0);
    }

    #[test]
    fn type1_margin_matches_table_value() {
        let m = MARGIN_Z * (0.05f64 * 0.95 / 2000.0).sqrt();
        assert!((m - 0.013).abs() < 5e-4);
    }
}
