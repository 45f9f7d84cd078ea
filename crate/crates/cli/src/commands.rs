//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use anytime_core::sequential::ConfidenceGrid;
use anytime_core::simlab::{monte_carlo, run_scenario, McConfig, McSummary};
use anytime_core::{Observation, TestOutcome, ThresholdMonitor};

use crate::config::{DataSource, Layer, RunConfig};
use crate::error::CliError;
use crate::input::CsvObservations;

type ObsStream<'a> = Box<dyn Iterator<Item = Result<Observation, CliError>> + 'a>;

/// Observations for a run: `horizon` generated draws, or every row of the input.
fn observations(rc: &RunConfig, horizon: usize) -> Result<ObsStream<'static>, CliError> {
    let dim = rc.scenario.functional.obs_dim();
    Ok(match &rc.data {
        DataSource::Generator => Box::new(rc.scenario.data(rc.seed)?.take(horizon).map(Ok)),
        DataSource::Stdin => Box::new(CsvObservations::new(io::stdin().lock(), dim)),
        DataSource::Csv(p) => {
            let f =
                File::open(p).map_err(|e| CliError::Config(format!("cannot open data file {}: {e}", p.display())))?;
            Box::new(CsvObservations::new(io::BufReader::new(f), dim))
        }
    })
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn write_config(dir: &Path, rc: &RunConfig) -> Result<(), CliError> {
    fs::write(dir.join("config.txt"), rc.render())?;
    Ok(())
}

#[derive(Serialize)]
struct TestSummary<'a> {
    command: &'static str,
    #[serde(flatten)]
    outcome: &'a TestOutcome,
    functional: String,
    family: String,
    strategy: String,
    null: &'a [f64],
    seed: u64,
    degenerate_rows: usize,
    warnings: &'a [String],
    config: &'a Layer,
}

pub fn test(rc: &RunConfig) -> Result<(), CliError> {
    let sc = &rc.scenario;
    let fam = sc.family_spec()?;
    let mut strat = sc.strategy(&fam, false)?;
    fs::create_dir_all(&rc.out)?;
    let mut path = BufWriter::new(File::create(rc.out.join("path.csv"))?);
    let mut steps = BufWriter::new(File::create(rc.out.join("steps.jsonl"))?);
    let theta_dim = fam.domain().dim();
    let mut header = ["t", "log_wealth", "wealth", "threshold", "rejected"].join(",");
    for j in 1..=theta_dim {
        header.push_str(&format!(",theta_{j}"));
    }
    writeln!(path, "{header}")?;
    let mut mon = ThresholdMonitor::new(sc.alpha)?;
    for x in observations(rc, sc.horizon)? {
        let x = x?;
        strat.step(&fam, &x)?;
        let lw = strat.log_wealth();
        let rejected = mon.observe(lw);
        let theta: Vec<String> = strat.theta_next().iter().map(|v| num(*v)).collect();
        writeln!(
            path,
            "{},{},{},{},{},{}",
            mon.t(),
            num(lw),
            num(lw.exp()),
            num(1.0 / sc.alpha),
            u8::from(rejected),
            theta.join(",")
        )?;
        writeln!(
            steps,
            "{}",
            json!({"t": mon.t(), "log_wealth": lw, "rejected": rejected, "theta": strat.theta_next()})
        )?;
        if rejected && !rc.continue_after_rejection {
            break;
        }
    }
    path.flush()?;
    steps.flush()?;
    let outcome = mon.outcome();
    let summary = TestSummary {
        command: "test",
        outcome: &outcome,
        functional: sc.functional.to_string(),
        family: sc.family.to_string(),
        strategy: sc.strategy.to_string(),
        null: &sc.null,
        seed: rc.seed,
        degenerate_rows: strat.degenerate_rows(),
        warnings: strat.warnings(),
        config: &rc.resolved,
    };
    write_json(&rc.out.join("summary.json"), &summary)?;
    write_config(&rc.out, rc)?;
    for w in strat.warnings() {
        eprintln!("warning: {w}");
    }
    match outcome.rejected_at {
        Some(t) => println!(
            "rejected at t = {t} (log W = {:.4}, threshold log(1/alpha) = {:.4})",
            outcome.final_log_wealth,
            mon.log_threshold()
        ),
        None => println!(
            "not rejected after {} observations (max log W = {:.4})",
            outcome.steps, outcome.running_max_log_wealth
        ),
    }
    Ok(())
}

pub fn confseq(rc: &RunConfig) -> Result<(), CliError> {
    let sc = &rc.scenario;
    let d = sc.functional.param_dim();
    let points = sc.admissible_grid();
    if points.is_empty() {
        return Err(CliError::Config(format!("grid {} has no admissible points for {}", sc.grid, sc.functional)));
    }
    let mut grid = ConfidenceGrid::new(points, sc.alpha, |lam| {
        let f = sc.family_for(lam)?;
        let s = sc.strategy(&f, false)?;
        Ok((f, s))
    })?;
    let null_fam = sc.family_spec()?;
    let mut null_strat = sc.strategy(&null_fam, false)?;
    let mut null_mon = ThresholdMonitor::new(sc.alpha)?;

    fs::create_dir_all(&rc.out)?;
    let mut csv = BufWriter::new(File::create(rc.out.join("confseq.csv"))?);
    let mut steps = BufWriter::new(File::create(rc.out.join("steps.jsonl"))?);
    let mut header = vec!["t".to_string(), "size".to_string()];
    header.extend((1..=d).map(|j| format!("estimate_{j}")));
    for j in 1..=d {
        header.push(format!("hull_lo_{j}"));
        header.push(format!("hull_hi_{j}"));
    }
    header.push("mask".into());
    writeln!(csv, "{}", header.join(","))?;

    let write_row = |grid: &ConfidenceGrid, csv: &mut BufWriter<File>| -> Result<(), CliError> {
        let mask = grid.mask();
        let rmax = grid.running_max();
        let best = (0..rmax.len()).min_by(|&a, &b| rmax[a].total_cmp(&rmax[b])).unwrap_or(0);
        let mut row = vec![grid.t().to_string(), mask.iter().filter(|&&m| m).count().to_string()];
        row.extend(grid.points()[best].iter().map(|v| num(*v)));
        match grid.hull() {
            Some((lo, hi)) => {
                for j in 0..d {
                    row.push(num(lo[j]));
                    row.push(num(hi[j]));
                }
            }
            None => row.extend(std::iter::repeat_n(String::new(), 2 * d)),
        }
        row.push(mask_string(&mask));
        writeln!(csv, "{}", row.join(","))?;
        Ok(())
    };
    write_row(&grid, &mut csv)?;
    for x in observations(rc, sc.confseq_horizon)? {
        let x = x?;
        grid.update(&x)?;
        null_strat.step(&null_fam, &x)?;
        let rejected = null_mon.observe(null_strat.log_wealth());
        write_row(&grid, &mut csv)?;
        writeln!(
            steps,
            "{}",
            json!({"t": grid.t(), "log_wealth": grid.log_wealths(), "rejected": rejected, "C_t_mask": mask_string(&grid.mask())})
        )?;
    }
    csv.flush()?;
    steps.flush()?;
    let hull = grid.hull();
    let truth = sc.generator.as_ref().and_then(|_| sc.truth().ok());
    let summary = json!({
        "command": "confseq",
        "alpha": sc.alpha,
        "threshold": 1.0 / sc.alpha,
        "steps": grid.t(),
        "grid": sc.grid.to_string(),
        "grid_points": grid.len(),
        "final_size": grid.mask().iter().filter(|&&m| m).count(),
        "final_hull": hull,
        "truth": truth,
        "null": sc.null,
        "null_rejected_at": null_mon.rejected_at(),
        "seed": rc.seed,
        "config": rc.resolved,
    });
    write_json(&rc.out.join("summary.json"), &summary)?;
    write_config(&rc.out, rc)?;
    match hull {
        Some((lo, hi)) => println!(
            "C_{} hull: lo = {:?}, hi = {:?} ({} of {} grid points)",
            grid.t(),
            lo,
            hi,
            grid.mask().iter().filter(|&&m| m).count(),
            grid.len()
        ),
        None => println!("C_{} is empty on the grid", grid.t()),
    }
    Ok(())
}

fn mask_string(mask: &[bool]) -> String {
    mask.iter().map(|&m| if m { '1' } else { '0' }).collect()
}

pub fn experiment(rc: &RunConfig) -> Result<(), CliError> {
    if rc.data != DataSource::Generator {
        return Err(CliError::Config("experiment runs on generated data; drop --data".into()));
    }
    let bundle = run_scenario(&rc.scenario, rc.seed)?;
    let dir = bundle.write(&rc.out)?;
    write_config(&dir, rc)?;
    let s = &bundle.summary;
    println!(
        "{}: seed {} rejected_at {:?}, truth in hull at all steps: {}; wrote {}",
        s.name,
        s.seed,
        s.rejected_at,
        s.truth_in_hull_all_steps,
        dir.display()
    );
    Ok(())
}

pub fn montecarlo(rc: &RunConfig) -> Result<(), CliError> {
    if rc.data != DataSource::Generator {
        return Err(CliError::Config("montecarlo runs on generated data; drop --data".into()));
    }
    let scenario = if rc.under_null { rc.scenario.under_null()? } else { rc.scenario.clone() };
    let mut horizons = rc.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let mut cfg = McConfig::new(scenario, rc.reps, horizons, rc.seed);
    cfg.regret = rc.regret;
    cfg.coverage = rc.coverage;
    let (summary, _) = monte_carlo(&cfg)?;
    fs::create_dir_all(&rc.out)?;
    write_json(&rc.out.join("montecarlo.json"), &json!({"summary": summary, "config": rc.resolved}))?;
    fs::write(rc.out.join("montecarlo.csv"), table(&summary))?;
    write_config(&rc.out, rc)?;
    print!("{}", table(&summary));
    Ok(())
}

/// One row per checkpoint horizon.
fn table(s: &McSummary) -> String {
    let mut out = String::from(
        "scenario,horizon,replications,rejections,frequency,ci_lo,ci_hi,type1_margin,mean_regret_over_t,coverage\n",
    );
    for (i, r) in s.rejection.iter().enumerate() {
        let regret = s.regret.as_ref().map_or(String::new(), |v| num(v[i].mean_regret_over_t));
        let coverage = match &s.coverage {
            Some(c) if i + 1 == s.rejection.len() => num(c.frequency),
            _ => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.scenario,
            r.horizon,
            s.replications,
            r.count,
            num(r.frequency),
            num(r.ci.0),
            num(r.ci.1),
            num(s.type1_margin),
            regret,
            coverage
        ));
    }
    out
}
