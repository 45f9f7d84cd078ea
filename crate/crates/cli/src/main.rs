//! `anytime`: anytime-valid sequential tests and confidence sequences from
//! the command line.

mod commands;
mod config;
mod error;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_file, Layer, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "anytime",
    version,
    about = "Anytime-valid tests and confidence sequences for statistical functionals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sequential test of a point null; writes path.csv, steps.jsonl, summary.json.
    Test(Common),
    /// Grid-inverted confidence sequence; writes confseq.csv, steps.jsonl, summary.json.
    Confseq(Common),
    /// Figure-backing bundle for a preset under <out>/runs/<name>/<seed>/.
    Experiment(Common),
    /// Monte Carlo study: rejection rates, regret slopes, coverage.
    Montecarlo(MonteCarloArgs),
}

#[derive(Args, Default)]
struct Common {
    /// Flat `key = value` config file (command-line flags take precedence).
    #[arg(long)]
    config: Option<PathBuf>,
    /// mean_sd_beta, var_cvar_beta or ar1_coeff.
    #[arg(long)]
    preset: Option<String>,
    /// mean, quantile:<a>, regression:<k>, mean_sd, var_cvar:<a>.
    #[arg(long)]
    functional: Option<String>,
    /// Null value, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    null: Option<String>,
    /// bounded_elicitable, bounded_identifiable, subpsi_elicitable, subpsi_identifiable.
    #[arg(long)]
    family: Option<String>,
    /// gaussian:<sigma>, hoeffding:<a>:<b>, custom:<umax>:<u>/<psi>:...
    #[arg(long)]
    psi: Option<String>,
    /// ftl, ftrl, ogd, ftlp.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Number of generated observations.
    #[arg(long)]
    horizon: Option<String>,
    /// Candidate grid lo:hi[:n][,lo:hi[:n]...].
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// CSV file with one observation per row, or `-` for stdin.
    #[arg(long)]
    data: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Keep consuming the stream after rejection.
    #[arg(long = "continue")]
    continue_: bool,
    /// Bet domain: box:lo:hi[,lo:hi] or ball:r[@c1,c2].
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    /// Fixed bet scale for sub-psi families.
    #[arg(long)]
    u: Option<String>,
    /// Minimum increment margin for bounded families.
    #[arg(long)]
    margin: Option<String>,
    /// Declared data range lo:hi[,lo:hi] (inf allowed).
    #[arg(long, allow_hyphen_values = true)]
    range: Option<String>,
    /// Gradient bound G for ogd/ftrl.
    #[arg(long)]
    gradient_bound: Option<String>,
    /// beta:a:b, gaussian:m:s, ar1:beta:sd, discrete:x/p,...
    #[arg(long, allow_hyphen_values = true)]
    generator: Option<String>,
    /// How the AR(1) noise 0.8 is read: variance (default) or sd.
    #[arg(long)]
    noise_scale: Option<String>,
    /// Times at which surfaces are recorded.
    #[arg(long)]
    snapshots: Option<String>,
    /// Steps the confidence grid is run for.
    #[arg(long)]
    confseq_horizon: Option<String>,
}

#[derive(Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    common: Common,
    /// Number of replications.
    #[arg(long)]
    reps: Option<String>,
    /// Checkpoint horizons, comma separated.
    #[arg(long)]
    horizons: Option<String>,
    /// Move the null to the true value (Type-I study).
    #[arg(long)]
    under_null: bool,
    /// Record Regret_T / T at each checkpoint.
    #[arg(long)]
    regret: bool,
    /// Report how often the true value is never rejected.
    #[arg(long)]
    coverage: bool,
}

impl Common {
    fn layer(&self) -> Layer {
        let mut l = Layer::new();
        let mut put = |k: &str, v: &Option<String>| {
            if let Some(v) = v {
                l.insert(k.to_string(), v.clone());
            }
        };
        put("preset", &self.preset);
        put("functional", &self.functional);
        put("null", &self.null);
        put("family", &self.family);
        put("psi", &self.psi);
        put("strategy", &self.strategy);
        put("alpha", &self.alpha);
        put("seed", &self.seed);
        put("horizon", &self.horizon);
        put("grid", &self.grid);
        put("data", &self.data);
        put("out", &self.out);
        put("region", &self.region);
        put("u", &self.u);
        put("margin", &self.margin);
        put("range", &self.range);
        put("gradient_bound", &self.gradient_bound);
        put("generator", &self.generator);
        put("noise_scale", &self.noise_scale);
        put("snapshots", &self.snapshots);
        put("confseq_horizon", &self.confseq_horizon);
        if self.continue_ {
            l.insert("continue".into(), "true".into());
        }
        l
    }

    fn resolve(&self, extra: Layer) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                parse_file(&text, &p.display().to_string())?
            }
            None => Layer::new(),
        };
        let mut cli = self.layer();
        cli.extend(extra);
        RunConfig::resolve(&file, &cli)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Test(c) => commands::test(&c.resolve(Layer::new())?),
        Command::Confseq(c) => commands::confseq(&c.resolve(Layer::new())?),
        Command::Experiment(c) => commands::experiment(&c.resolve(Layer::new())?),
        Command::Montecarlo(m) => {
            let mut extra = Layer::new();
            if let Some(r) = &m.reps {
                extra.insert("reps".into(), r.clone());
            }
            if let Some(h) = &m.horizons {
                extra.insert("horizons".into(), h.clone());
            }
            for (flag, key) in [(m.under_null, "under_null"), (m.regret, "regret"), (m.coverage, "coverage")] {
                if flag {
                    extra.insert(key.into(), "true".into());
                }
            }
            commands::montecarlo(&m.common.resolve(extra)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
