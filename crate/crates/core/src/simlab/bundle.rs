//! Figure-backing artifact bundles.
//!
//! Layout under `<root>/runs/<name>/<seed>/`:
//!
//! | file          | columns |
//! |---------------|---------|
//! | `path.csv`    | `t, log_wealth, wealth, threshold, rejected, theta_1..theta_d` |
//! | `surface.csv` | `t, lambda_1..lambda_d, log_wealth, running_max_log_wealth, in_set` |
//! | `confseq.csv` | `t, size, estimate_1.., hull_lo_1, hull_hi_1, .., mask` |
//! | `summary.json`| decision, truth, coverage flags, seeds |
//!
//! `theta_j` is the bet used for the next step; `mask` is a 0/1 string over
//! the admissible grid in row-major order (first coordinate slowest);
//! `estimate` is the grid point with the smallest running maximum wealth.
//! Floats are written in shortest round-trip form, so reruns are
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::sequential::{ConfidenceGrid, RunOptions, ThresholdMonitor};

use super::presets::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleSummary {
    pub name: String,
    pub seed: u64,
    pub functional: String,
    pub family: String,
    pub strategy: String,
    pub alpha: f64,
    pub threshold: f64,
    pub horizon: usize,
    pub null: Vec<f64>,
    pub truth: Vec<f64>,
    pub rejected_at: Option<usize>,
    pub final_log_wealth: f64,
    pub running_max_log_wealth: f64,
    pub snapshots: Vec<usize>,
    pub grid: String,
    pub grid_points: usize,
    pub confseq_horizon: usize,
    /// Truth inside the hull of `C_t` at every recorded step.
    pub truth_in_hull_all_steps: bool,
    /// Null excluded from `C_t` by the end of the confidence run.
    pub null_excluded: bool,
    pub degenerate_rows: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub path_csv: String,
    pub surface_csv: String,
    pub confseq_csv: String,
    pub summary: BundleSummary,
}

fn csv_line(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Runs the scenario's test and confidence grid on one seeded stream.
pub fn run_scenario(sc: &Scenario, seed: u64) -> Result<Bundle> {
    sc.validate()?;
    let truth = sc.truth()?;
    let fam = sc.family_spec()?;
    let mut strat = sc.strategy(&fam, false)?;
    let d = sc.functional.param_dim();
    let theta_dim = fam.domain().dim();

    // Wealth path, continued after rejection so the full figure is available.
    let mut path = {
        let mut h: Vec<String> = ["t", "log_wealth", "wealth", "threshold", "rejected"].map(String::from).to_vec();
        h.extend((1..=theta_dim).map(|j| format!("theta_{j}")));
        let mut first = csv_line(&h);
        let mut row0 = vec!["0".into(), "0".into(), "1".into(), num(1.0 / sc.alpha), "0".into()];
        row0.extend(strat.theta_next().iter().map(|v| num(*v)));
        first.push_str(&csv_line(&row0));
        first
    };
    let stream = sc.data(seed)?.take(sc.horizon);
    let opts = RunOptions { continue_after_rejection: true };
    let outcome =
        crate::sequential::run_test_with(&fam, &mut strat, stream, sc.alpha, opts, |s, m: &ThresholdMonitor| {
            let lw = s.log_wealth();
            let mut row = vec![
                m.t().to_string(),
                num(lw),
                num(lw.exp()),
                num(1.0 / sc.alpha),
                u8::from(m.rejected()).to_string(),
            ];
            row.extend(s.theta_next().iter().map(|v| num(*v)));
            path.push_str(&csv_line(&row));
            Ok(())
        })?;

    // Confidence grid, surfaces and the running band.
    let points = sc.admissible_grid();
    let mut grid = ConfidenceGrid::new(points, sc.alpha, |lam| {
        let f = sc.family_for(lam)?;
        let s = sc.strategy(&f, false)?;
        Ok((f, s))
    })?;
    let mut surface = {
        let mut h = vec!["t".to_string()];
        h.extend((1..=d).map(|j| format!("lambda_{j}")));
        h.extend(["log_wealth", "running_max_log_wealth", "in_set"].map(String::from));
        csv_line(&h)
    };
    let mut confseq = {
        let mut h = vec!["t".to_string(), "size".to_string()];
        h.extend((1..=d).map(|j| format!("estimate_{j}")));
        for j in 1..=d {
            h.push(format!("hull_lo_{j}"));
            h.push(format!("hull_hi_{j}"));
        }
        h.push("mask".into());
        csv_line(&h)
    };
    let mut truth_in_hull = true;
    let mut record = |grid: &ConfidenceGrid, confseq: &mut String| {
        let mask = grid.mask();
        let rmax = grid.running_max();
        let best = (0..rmax.len()).min_by(|&a, &b| rmax[a].total_cmp(&rmax[b])).expect("nonempty grid");
        let mut row = vec![grid.t().to_string(), mask.iter().filter(|&&m| m).count().to_string()];
        row.extend(grid.points()[best].iter().map(|v| num(*v)));
        match grid.hull() {
            Some((lo, hi)) => {
                for j in 0..d {
                    row.push(num(lo[j]));
                    row.push(num(hi[j]));
                    truth_in_hull &= lo[j] <= truth[j] && truth[j] <= hi[j];
                }
            }
            None => {
                truth_in_hull = false;
                for _ in 0..d {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        row.push(mask.iter().map(|&m| if m { '1' } else { '0' }).collect());
        confseq.push_str(&csv_line(&row));
    };
    record(&grid, &mut confseq);
    let last_snapshot = sc.snapshots.iter().copied().max().unwrap_or(0);
    let steps = sc.confseq_horizon.max(last_snapshot);
    for x in sc.data(seed)?.take(steps) {
        grid.update(&x)?;
        record(&grid, &mut confseq);
        if sc.snapshots.contains(&grid.t()) {
            let lw = grid.log_wealths();
            let rm = grid.running_max();
            let mask = grid.mask();
            for (i, p) in grid.points().iter().enumerate() {
                let mut row = vec![grid.t().to_string()];
                row.extend(p.iter().map(|v| num(*v)));
                row.push(num(lw[i]));
                row.push(num(rm[i]));
                row.push(u8::from(mask[i]).to_string());
                surface.push_str(&csv_line(&row));
            }
        }
    }
    let null_excluded = {
        let pts = grid.points();
        let mask = grid.mask();
        let nearest = (0..pts.len())
            .min_by(|&a, &b| dist2(pts[a], &sc.null).total_cmp(&dist2(pts[b], &sc.null)))
            .expect("nonempty grid");
        !mask[nearest]
    };

    let summary = BundleSummary {
        name: sc.name.clone(),
        seed,
        functional: sc.functional.to_string(),
        family: sc.family.to_string(),
        strategy: sc.strategy.to_string(),
        alpha: sc.alpha,
        threshold: 1.0 / sc.alpha,
        horizon: sc.horizon,
        null: sc.null.clone(),
        truth,
        rejected_at: outcome.rejected_at,
        final_log_wealth: outcome.final_log_wealth,
        running_max_log_wealth: outcome.running_max_log_wealth,
        snapshots: sc.snapshots.clone(),
        grid: sc.grid.to_string(),
        grid_points: grid.len(),
        confseq_horizon: steps,
        truth_in_hull_all_steps: truth_in_hull,
        null_excluded,
        degenerate_rows: strat.degenerate_rows(),
        warnings: strat.warnings().to_vec(),
    };
    Ok(Bundle { path_csv: path, surface_csv: surface, confseq_csv: confseq, summary })
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Bundle {
    /// Writes the bundle to `<root>/runs/<name>/<seed>/` and returns that directory.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let dir = root.join("runs").join(&self.summary.name).join(self.summary.seed.to_string());
        self.write_into(&dir)?;
        Ok(dir)
    }

    pub fn write_into(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("path.csv"), &self.path_csv)?;
        fs::write(dir.join("surface.csv"), &self.surface_csv)?;
        fs::write(dir.join("confseq.csv"), &self.confseq_csv)?;
        let mut json = serde_json::to_string_pretty(&self.summary)?;
        json.push('\n');
        fs::write(dir.join("summary.json"), json)?;
        Ok(())
    }
}
