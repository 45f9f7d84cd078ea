//! Anytime-valid decisions on top of wealth processes.
//!
//! A test rejects at the first t with `log W_t > log(1/α)` (strict). Since
//! `W` is a test supermartingale, Ville's inequality bounds the probability
//! of ever rejecting a true null by α, whatever the stopping rule.
//!
//! Set-valued nulls use the minimum e-process `M_t^K = min_{λ₀∈K} W_t^{λ₀}`
//! over a finite grid of K, rejecting on a current-time crossing. Confidence
//! sequences invert a grid of tests: `C_t` keeps every candidate whose running
//! maximum wealth has never exceeded `1/α`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::observation::cartesian;
use crate::strategies::StrategyState;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Tracks `max_{i≤t} log W_i` against the Ville threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMonitor {
    alpha: f64,
    log_threshold: f64,
    t: usize,
    running_max: f64,
    last: f64,
    rejected_at: Option<usize>,
}

impl ThresholdMonitor {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, log_threshold: (1.0 / alpha).ln(), t: 0, running_max: 0.0, last: 0.0, rejected_at: None })
    }

    /// Records `log W_t` for the next step; returns whether the null is
    /// rejected (now or earlier).
    pub fn observe(&mut self, log_wealth: f64) -> bool {
        self.t += 1;
        self.last = log_wealth;
        self.running_max = self.running_max.max(log_wealth);
        if self.rejected_at.is_none() && log_wealth > self.log_threshold {
            self.rejected_at = Some(self.t);
        }
        self.rejected_at.is_some()
    }

    pub fn rejected(&self) -> bool {
        self.rejected_at.is_some()
    }

    pub fn rejected_at(&self) -> Option<usize> {
        self.rejected_at
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn log_threshold(&self) -> f64 {
        self.log_threshold
    }

    pub fn outcome(&self) -> TestOutcome {
        TestOutcome {
            alpha: self.alpha,
            threshold: 1.0 / self.alpha,
            rejected_at: self.rejected_at,
            running_max_log_wealth: self.running_max,
            final_log_wealth: self.last,
            steps: self.t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub alpha: f64,
    pub threshold: f64,
    pub rejected_at: Option<usize>,
    pub running_max_log_wealth: f64,
    pub final_log_wealth: f64,
    /// Observations consumed.
    pub steps: usize,
}

impl TestOutcome {
    pub fn rejected(&self) -> bool {
        self.rejected_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Keep consuming the stream after rejection (diagnostics only).
    pub continue_after_rejection: bool,
}

/// Feeds `stream` through the strategy until rejection (or the end).
pub fn run_test<I, X>(
    fam: &FamilySpec,
    strat: &mut StrategyState,
    stream: I,
    alpha: f64,
    opts: RunOptions,
) -> Result<TestOutcome>
where
    I: IntoIterator<Item = X>,
    X: AsRef<[f64]>,
{
    run_test_with(fam, strat, stream, alpha, opts, |_, _| Ok(()))
}

/// As [`run_test`], calling `on_step(strategy, monitor)` after every step.
pub fn run_test_with<I, X, F>(
    fam: &FamilySpec,
    strat: &mut StrategyState,
    stream: I,
    alpha: f64,
    opts: RunOptions,
    mut on_step: F,
) -> Result<TestOutcome>
where
    I: IntoIterator<Item = X>,
    X: AsRef<[f64]>,
    F: FnMut(&StrategyState, &ThresholdMonitor) -> Result<()>,
{
    let mut mon = ThresholdMonitor::new(alpha)?;
    for x in stream {
        strat.step(fam, x.as_ref())?;
        let rejected = mon.observe(strat.log_wealth());
        on_step(strat, &mon)?;
        if rejected && !opts.continue_after_rejection {
            break;
        }
    }
    Ok(mon.outcome())
}

/// Outcome of a set-valued test, with the final per-null log wealths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetTestOutcome {
    #[serde(flatten)]
    pub outcome: TestOutcome,
    pub log_wealths: Vec<f64>,
}

/// Tests `H₀: λ ∈ K` via `M_t^K = min_k W_t^{λ_k}` over the supplied grid.
pub fn run_set_test<I, X>(
    fams: &[FamilySpec],
    strats: &mut [StrategyState],
    stream: I,
    alpha: f64,
    opts: RunOptions,
) -> Result<SetTestOutcome>
where
    I: IntoIterator<Item = X>,
    X: AsRef<[f64]>,
{
    if fams.is_empty() || fams.len() != strats.len() {
        return Err(Error::Config("set test needs a nonempty grid with one strategy per null".into()));
    }
    let mut mon = ThresholdMonitor::new(alpha)?;
    for x in stream {
        let x = x.as_ref();
        let mut min = f64::INFINITY;
        for (f, s) in fams.iter().zip(strats.iter_mut()) {
            s.step(f, x)?;
            min = min.min(s.log_wealth());
        }
        if mon.observe(min) && !opts.continue_after_rejection {
            break;
        }
    }
    Ok(SetTestOutcome { outcome: mon.outcome(), log_wealths: strats.iter().map(|s| s.log_wealth()).collect() })
}

// ── Confidence sequences ─────────────────────────────────────────────────

/// Axis-aligned grid: one `(lo, hi, points)` triple per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<(f64, f64, usize)>,
}

impl GridSpec {
    pub const DEFAULT_POINTS: usize = 101;

    pub fn new(axes: Vec<(f64, f64, usize)>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Param("grid needs at least one axis".into()));
        }
        for &(lo, hi, n) in &axes {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) || n == 0 {
                return Err(Error::Param(format!("bad grid axis {lo}:{hi}:{n}")));
            }
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Points of one axis; a single point sits at the midpoint.
    pub fn axis_points(&self, i: usize) -> Vec<f64> {
        let (lo, hi, n) = self.axes[i];
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    /// All grid points, first axis varying slowest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        cartesian(&(0..self.dim()).map(|i| self.axis_points(i)).collect::<Vec<_>>())
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.axes.iter().map(|(lo, hi, n)| format!("{lo}:{hi}:{n}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    /// `lo:hi[:n],lo:hi[:n]`; `n` defaults to 101.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("grid `{s}` is not lo:hi[:n][,lo:hi[:n]...]"));
        let mut axes = Vec::new();
        for part in s.split(',') {
            let f: Vec<&str> = part.trim().split(':').collect();
            if !(2..=3).contains(&f.len()) {
                return Err(bad());
            }
            let lo: f64 = f[0].trim().parse().map_err(|_| bad())?;
            let hi: f64 = f[1].trim().parse().map_err(|_| bad())?;
            let n = match f.get(2) {
                Some(n) => n.trim().parse().map_err(|_| bad())?,
                None => Self::DEFAULT_POINTS,
            };
            axes.push((lo, hi, n));
        }
        Self::new(axes)
    }
}

struct Candidate {
    lambda: Vec<f64>,
    fam: FamilySpec,
    strat: StrategyState,
    running_max: f64,
}

/// Grid-inverted anytime-valid confidence sequence.
pub struct ConfidenceGrid {
    candidates: Vec<Candidate>,
    alpha: f64,
    log_threshold: f64,
    t: usize,
}

impl ConfidenceGrid {
    /// Builds one family and strategy per candidate with `build(λ)`.
    pub fn new<F>(points: Vec<Vec<f64>>, alpha: f64, mut build: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<(FamilySpec, StrategyState)>,
    {
        check_alpha(alpha)?;
        if points.is_empty() {
            return Err(Error::Config("confidence grid is empty".into()));
        }
        let candidates = points
            .into_iter()
            .map(|lambda| {
                let (fam, strat) = build(&lambda)?;
                Ok(Candidate { lambda, fam, strat, running_max: 0.0 })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { candidates, alpha, log_threshold: (1.0 / alpha).ln(), t: 0 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn points(&self) -> Vec<&[f64]> {
        self.candidates.iter().map(|c| c.lambda.as_slice()).collect()
    }

    /// Advances every candidate by one observation (in parallel).
    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        self.candidates.par_iter_mut().try_for_each(|c| -> Result<()> {
            // Once excluded a candidate stays excluded; it is still advanced so
            // that reported wealths remain meaningful.
            c.strat.step(&c.fam, x)?;
            c.running_max = c.running_max.max(c.strat.log_wealth());
            Ok(())
        })?;
        self.t += 1;
        Ok(())
    }

    /// Membership mask of `C_t`.
    pub fn mask(&self) -> Vec<bool> {
        self.candidates.iter().map(|c| c.running_max <= self.log_threshold).collect()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.candidates[idx].running_max <= self.log_threshold
    }

    pub fn log_wealths(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.strat.log_wealth()).collect()
    }

    pub fn running_max(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.running_max).collect()
    }

    /// Per-coordinate `(lo, hi)` hull of `C_t`; `None` when the set is empty.
    pub fn hull(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut it = self.candidates.iter().filter(|c| c.running_max <= self.log_threshold);
        let first = it.next()?;
        let mut lo = first.lambda.clone();
        let mut hi = first.lambda.clone();
        for c in it {
            for (i, v) in c.lambda.iter().enumerate() {
                lo[i] = lo[i].min(*v);
                hi[i] = hi[i].max(*v);
            }
        }
        Some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_crossing_of_twenty() {
        let mut m = ThresholdMonitor::new(0.05).unwrap();
        let path = [0.5f64, 2.0, 25.0];
        let flags: Vec<bool> = path.iter().map(|w| m.observe(w.ln())).collect();
        assert_eq!(flags, [false, false, true]);
        assert_eq!(m.rejected_at(), Some(3));
        m.observe(-5.0);
        assert_eq!(m.rejected_at(), Some(3));
    }

    #[test]
    fn threshold_is_strict() {
        let mut m = ThresholdMonitor::new(0.05).unwrap();
        assert!(!m.observe(20f64.ln()));
    }

    #[test]
    fn alpha_validation() {
        for a in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            assert!(ThresholdMonitor::new(a).is_err());
        }
    }

    #[test]
    fn grid_spec_parsing() {
        let g: GridSpec = "0:1:101".parse().unwrap();
        assert_eq!(g.points().len(), 101);
        let g: GridSpec = "0:1:3,2:4:2".parse().unwrap();
        assert_eq!(
            g.points(),
            vec![vec![0.0, 2.0], vec![0.0, 4.0], vec![0.5, 2.0], vec![0.5, 4.0], vec![1.0, 2.0], vec![1.0, 4.0]]
        );
        assert_eq!("0:1:1".parse::<GridSpec>().unwrap().points(), vec![vec![0.5]]);
        assert_eq!("0:1".parse::<GridSpec>().unwrap().axes[0].2, 101);
        assert!("0:1:0".parse::<GridSpec>().is_err());
        assert!("1:0:5".parse::<GridSpec>().is_err());
        assert!("a:b".parse::<GridSpec>().is_err());
    }
}
