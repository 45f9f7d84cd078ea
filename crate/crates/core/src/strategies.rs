//! Online betting strategies.
//!
//! A strategy picks θ_t before seeing X_t; the resulting wealth
//!
//! ```text
//!   W_t = ∏_{i≤t} L_i^{θ_i} / L_{i−1}^{θ_i}
//! ```
//!
//! is a test supermartingale whenever every L^θ is one (Dirac mixing). The
//! bets come from online convex optimisation on the losses −log-increment:
//!
//! ```text
//!   ftl    θ_{t+1} = argmax_θ log L_t^θ
//!   ftrl   θ_{t+1} = argmax_θ log L_t^θ − Σ_{i<t} (σ_i/2) ‖θ − θ_{i+1}‖²,
//!          σ_i = (G/D)(√(i+1) − √i),  Σ_{i<t} σ_i = (G/D)√t
//!   ogd    θ_{t+1} = Π_Θ(θ_t − η_t ν_t),  η_t = D / (G √t)
//!   ftlp   θ_{t+1} = argmax_θ E_{P̂}[log-increment(θ, X)]
//! ```
//!
//! Regret_t = max_θ log L_t^θ − log W_t. Documented bounds used in tests:
//! FTL on μ-strongly concave increments `(G²/2μ)(1 + log T)`; OGD and FTRL
//! `1.5 · G · D · √T`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteLaw;
use crate::error::{check_dim, Error, Result};
use crate::families::{ConcavityCertificate, FamilySpec, Payoff, PayoffSum};
use crate::numeric::{dot, log_sum_exp_weighted};
use crate::observation::Observation;
use crate::solver::{maximize, maximize_refined, Objective, SolverConfig};

/// Constant `c` in the documented `c · G · D · √T` regret bound for OGD and
/// FTRL-proximal.
pub const ROOT_REGRET_CONSTANT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ftl,
    FtrlProximal,
    Ogd,
    Ftlp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::Ftl, Self::FtrlProximal, Self::Ogd, Self::Ftlp];
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ftl => "ftl",
            Self::FtrlProximal => "ftrl",
            Self::Ogd => "ogd",
            Self::Ftlp => "ftlp",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.to_string() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown strategy `{s}` (expected ftl, ftrl, ogd, ftlp)")))
    }
}

/// Strategy configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOptions {
    /// Gradient bound G; defaults to the family's conservative estimate.
    pub gradient_bound: Option<f64>,
    pub solver: SolverConfig,
    /// Keep the full payoff history so that regret can be computed for
    /// algorithms that do not need it (OGD). Costs O(t) memory.
    pub track_regret: bool,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        Self { gradient_bound: None, solver: SolverConfig::default(), track_regret: true }
    }
}

/// One ledger row, streamed as JSON lines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub t: usize,
    pub theta: Vec<f64>,
    pub log_wealth: f64,
    pub regret: Option<f64>,
}

/// State of an online betting strategy on one stream.
#[derive(Debug, Clone)]
pub struct StrategyState {
    algo: Algorithm,
    theta_next: Vec<f64>,
    history: Option<PayoffSum>,
    t: usize,
    log_wealth: f64,
    gradient_bound: Option<f64>,
    diameter: f64,
    // FTRL: Σσ_i and Σσ_i θ_{i+1}
    reg_strength: f64,
    reg_linear: Vec<f64>,
    predictive: Option<DiscreteLaw<Observation>>,
    solver: SolverConfig,
    /// Value of max_θ log L_t^θ when the update already computed it.
    best_cache: Option<f64>,
    degenerate_rows: usize,
    warnings: Vec<String>,
}

impl StrategyState {
    pub fn new(algo: Algorithm, fam: &FamilySpec, opts: &StrategyOptions) -> Result<Self> {
        let domain = fam.domain();
        let g = opts.gradient_bound.or(fam.gradient_bound());
        if let Some(g) = opts.gradient_bound {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::Param(format!("gradient bound must be finite and >= 0, got {g}")));
            }
        }
        if matches!(algo, Algorithm::Ogd | Algorithm::FtrlProximal) && g.is_none() {
            return Err(Error::Config(format!(
                "{algo} needs a gradient bound G; the family has none on its data range, so supply one"
            )));
        }
        let mut warnings = Vec::new();
        if let ConcavityCertificate::Uncertified { reason } = fam.certify_concavity() {
            warnings.push(format!("family not certified concave ({reason}); regret guarantees do not apply"));
        }
        let keep = opts.track_regret || !matches!(algo, Algorithm::Ogd);
        let mut theta = domain.center();
        domain.project(&mut theta);
        Ok(Self {
            algo,
            theta_next: theta,
            history: keep.then(|| PayoffSum::new(fam)),
            t: 0,
            log_wealth: 0.0,
            gradient_bound: g,
            diameter: domain.diameter(),
            reg_strength: 0.0,
            reg_linear: vec![0.0; domain.dim()],
            predictive: None,
            solver: opts.solver,
            best_cache: None,
            degenerate_rows: 0,
            warnings,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algo
    }

    /// The predictable bet for the coming observation.
    pub fn theta_next(&self) -> &[f64] {
        &self.theta_next
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn log_wealth(&self) -> f64 {
        self.log_wealth
    }

    pub fn gradient_bound(&self) -> Option<f64> {
        self.gradient_bound
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Regression rows with zero covariates seen so far (they contribute m = 0).
    pub fn degenerate_rows(&self) -> usize {
        self.degenerate_rows
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Installs the predictive measure used by FTLP for the next update.
    pub fn set_predictive(&mut self, fam: &FamilySpec, law: DiscreteLaw<Observation>) -> Result<()> {
        if self.algo != Algorithm::Ftlp {
            return Err(Error::Config("predictive measures only apply to ftlp".into()));
        }
        for a in law.atoms() {
            check_dim(fam.functional().obs_dim(), a.dim())?;
        }
        self.theta_next = ftlp_update(fam, &law, self.t + 1, &self.theta_next, &self.solver)?;
        self.predictive = Some(law);
        Ok(())
    }

    /// Bets `θ_next` on `x`, books the realised log increment and updates the bet.
    pub fn step(&mut self, fam: &FamilySpec, x: &[f64]) -> Result<f64> {
        let t = self.t + 1;
        let (payoff, degenerate) = fam.payoff(x, t)?;
        let theta = self.theta_next.clone();
        let inc = fam.eval(&payoff, &theta)?;
        self.degenerate_rows += usize::from(degenerate);
        self.log_wealth += inc;
        self.t = t;
        self.best_cache = None;
        let ogd_grad = if self.algo == Algorithm::Ogd {
            let mut g = vec![0.0; theta.len()];
            fam.eval_derivs(&payoff, &theta, &mut g, None)?;
            Some(g)
        } else {
            None
        };
        if let Some(h) = self.history.as_mut() {
            h.push(payoff, 1.0);
        }
        self.theta_next = match self.algo {
            Algorithm::Ftl => {
                let h = self.history.as_ref().expect("ftl keeps history");
                let (th, best) = ftl_solve(fam, h, &theta, &self.solver)?;
                self.best_cache = Some(best);
                th
            }
            Algorithm::FtrlProximal => {
                let g = self.gradient_bound.unwrap_or(0.0);
                let sigma = if self.diameter > 0.0 {
                    g / self.diameter * ((t as f64).sqrt() - ((t - 1) as f64).sqrt())
                } else {
                    0.0
                };
                self.reg_strength += sigma;
                for (c, th) in self.reg_linear.iter_mut().zip(&theta) {
                    *c += sigma * th;
                }
                let h = self.history.as_ref().expect("ftrl keeps history");
                ftrl_solve(fam, h, self.reg_strength, &self.reg_linear, &theta, &self.solver)?
            }
            Algorithm::Ogd => {
                let g = ogd_grad.expect("computed above");
                let nu: Vec<f64> = g.iter().map(|v| -v).collect();
                ogd_update(fam, &theta, &nu, t, self.diameter, self.gradient_bound.unwrap_or(0.0))
            }
            Algorithm::Ftlp => match &self.predictive {
                Some(law) => ftlp_update(fam, law, t + 1, &theta, &self.solver)?,
                None => {
                    let h = self.history.as_ref().expect("ftlp keeps history");
                    let (th, best) = ftl_solve(fam, h, &theta, &self.solver)?;
                    self.best_cache = Some(best);
                    th
                }
            },
        };
        Ok(inc)
    }

    /// `(argmax_θ log L_t^θ, max value)` over the family domain.
    pub fn best_fixed(&self, fam: &FamilySpec) -> Result<(Vec<f64>, f64)> {
        let h =
            self.history.as_ref().ok_or_else(|| Error::Config("regret tracking disabled for this strategy".into()))?;
        if h.is_empty() {
            return Ok((self.theta_next.clone(), 0.0));
        }
        if let Some((th, v)) = closed_form(fam, h, 0.0, &[]) {
            return Ok((th, v));
        }
        let obj = SumObjective { fam, sum: h, scale: 1.0 / h.len() as f64 };
        let s = maximize_refined(&obj, fam.domain(), &self.theta_next, &self.solver)?;
        Ok((s.theta, s.value * h.len() as f64))
    }

    /// `Regret_t = max_θ log L_t^θ − log W_t`.
    pub fn regret(&self, fam: &FamilySpec) -> Result<f64> {
        // A one-point domain leaves nothing to regret; W_t is L_t^θ itself.
        if self.t == 0 || fam.domain().is_singleton() {
            return Ok(0.0);
        }
        let best = match self.best_cache {
            Some(b) => b,
            None => self.best_fixed(fam)?.1,
        };
        Ok(best - self.log_wealth)
    }

    pub fn ledger_row(&self, fam: &FamilySpec, with_regret: bool) -> Result<LedgerRow> {
        Ok(LedgerRow {
            t: self.t,
            theta: self.theta_next.clone(),
            log_wealth: self.log_wealth,
            regret: if with_regret { Some(self.regret(fam)?) } else { None },
        })
    }
}

// ── Objectives ───────────────────────────────────────────────────────────

/// `scale · (Σ_i log-increment_i(θ) − (S/2)‖θ‖² + ⟨C, θ⟩)`.
struct SumObjective<'a> {
    fam: &'a FamilySpec,
    sum: &'a PayoffSum,
    scale: f64,
}

impl Objective for SumObjective<'_> {
    fn dim(&self) -> usize {
        self.fam.domain().dim()
    }

    fn eval(&self, theta: &[f64], grad: Option<&mut [f64]>, mut hess: Option<&mut [f64]>) -> Result<f64> {
        let Some(g) = grad else {
            return Ok(self.sum.value(self.fam, theta)? * self.scale);
        };
        let v = self.sum.derivs(self.fam, theta, g, hess.as_deref_mut())?;
        g.iter_mut().for_each(|x| *x *= self.scale);
        if let Some(h) = hess {
            h.iter_mut().for_each(|x| *x *= self.scale);
        }
        Ok(v * self.scale)
    }

    fn smooth(&self) -> bool {
        self.fam.is_smooth()
    }
}

struct RegularizedObjective<'a> {
    inner: SumObjective<'a>,
    strength: f64,
    linear: &'a [f64],
}

impl Objective for RegularizedObjective<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, theta: &[f64], mut grad: Option<&mut [f64]>, mut hess: Option<&mut [f64]>) -> Result<f64> {
        let n = theta.len();
        let base = self.inner.eval(theta, grad.as_deref_mut(), hess.as_deref_mut())?;
        let s = self.inner.scale;
        let reg = -0.5 * self.strength * dot(theta, theta) + dot(self.linear, theta);
        if let Some(g) = grad {
            for i in 0..n {
                g[i] += s * (-self.strength * theta[i] + self.linear[i]);
            }
        }
        if let Some(h) = hess {
            for i in 0..n {
                h[i * n + i] -= s * self.strength;
            }
        }
        Ok(base + s * reg)
    }

    fn smooth(&self) -> bool {
        self.inner.smooth()
    }
}

/// Closed-form maximiser of `u⟨η, M⟩ − V c u² ‖η‖² − (S/2)‖η‖² + ⟨C, η⟩` for
/// sub-ψ identifiable families with fixed u and quadratic ψ. The objective is
/// isotropic, so the constrained maximiser is the projection of the
/// unconstrained one. Returns `(θ, Σ log-increments at θ)`.
fn closed_form(fam: &FamilySpec, sum: &PayoffSum, strength: f64, linear: &[f64]) -> Option<(Vec<f64>, f64)> {
    let (u, c) = fam.quadratic_linear()?;
    let (m, v) = sum.aggregate()?;
    let curv = 2.0 * v * c * u * u + strength;
    let mut theta: Vec<f64> = if curv > 0.0 {
        m.iter().enumerate().map(|(i, mi)| (u * mi + linear.get(i).copied().unwrap_or(0.0)) / curv).collect()
    } else {
        fam.domain().center()
    };
    fam.domain().project(&mut theta);
    let value = sum.value(fam, &theta).ok()?;
    Some((theta, value))
}

fn ftl_solve(fam: &FamilySpec, sum: &PayoffSum, warm: &[f64], solver: &SolverConfig) -> Result<(Vec<f64>, f64)> {
    if sum.is_empty() {
        return Ok((fam.domain().center(), 0.0));
    }
    if let Some(r) = closed_form(fam, sum, 0.0, &[]) {
        return Ok(r);
    }
    let obj = SumObjective { fam, sum, scale: 1.0 / sum.total_weight() };
    let s = maximize(&obj, fam.domain(), warm, solver)?;
    Ok((s.theta, s.value * sum.total_weight()))
}

/// Follow the leader: `argmax_θ Σ_i log-increment_i(θ)` over Θ, warm-started
/// at `warm`. An empty history returns the domain centre.
pub fn ftl_update(fam: &FamilySpec, history: &PayoffSum, warm: &[f64], solver: &SolverConfig) -> Result<Vec<f64>> {
    ftl_solve(fam, history, warm, solver).map(|r| r.0)
}

fn ftrl_solve(
    fam: &FamilySpec,
    sum: &PayoffSum,
    strength: f64,
    linear: &[f64],
    warm: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    if let Some((th, _)) = closed_form(fam, sum, strength, linear) {
        return Ok(th);
    }
    let scale = 1.0 / sum.total_weight().max(1.0);
    let obj = RegularizedObjective { inner: SumObjective { fam, sum, scale }, strength, linear };
    Ok(maximize(&obj, fam.domain(), warm, solver)?.theta)
}

/// FTRL with proximal quadratic regularisers: maximises
/// `Σ_i log-increment_i(θ) − (S/2)‖θ‖² + ⟨C, θ⟩`, where `S = Σσ_i` and
/// `C = Σσ_i θ_{i+1}` collect the regularisers centred at past bets.
pub fn ftrl_update(
    fam: &FamilySpec,
    history: &PayoffSum,
    strength: f64,
    linear: &[f64],
    warm: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    ftrl_solve(fam, history, strength, linear, warm, solver)
}

/// `σ_i = (G/D)(√(i+1) − √i)` for `i = 0, 1, ...`.
pub fn ftrl_sigma(i: usize, gradient_bound: f64, diameter: f64) -> f64 {
    if diameter == 0.0 {
        return 0.0;
    }
    gradient_bound / diameter * (((i + 1) as f64).sqrt() - (i as f64).sqrt())
}

/// Online gradient descent step `Π_Θ(θ_t − η_t ν_t)` with `η_t = D/(G√t)`.
pub fn ogd_update(
    fam: &FamilySpec,
    theta: &[f64],
    nu: &[f64],
    t: usize,
    diameter: f64,
    gradient_bound: f64,
) -> Vec<f64> {
    let eta = if gradient_bound > 0.0 && t > 0 { diameter / (gradient_bound * (t as f64).sqrt()) } else { 0.0 };
    let mut next: Vec<f64> = theta.iter().zip(nu).map(|(a, b)| a - eta * b).collect();
    fam.domain().project(&mut next);
    next
}

/// Follow the leading predictor: `argmax_θ E_P̂[log-increment(θ, X)]` for a
/// finite predictive law `P̂`, evaluated as step `t`.
pub fn ftlp_update(
    fam: &FamilySpec,
    predictive: &DiscreteLaw<Observation>,
    t: usize,
    warm: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    let mut sum = PayoffSum::new(fam);
    for (x, w) in predictive.iter() {
        if w > 0.0 {
            sum.push(fam.payoff(x, t)?.0, w);
        }
    }
    ftl_update(fam, &sum, warm, solver)
}

// ── Mixtures ─────────────────────────────────────────────────────────────

/// A finite mixing distribution over bets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::Param("mixture needs matching, non-empty atoms and weights".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Param("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Param(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, weights })
    }

    pub fn dirac(theta: Vec<f64>) -> Self {
        Self { atoms: vec![theta], weights: vec![1.0] }
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `log Σ_j w_j exp(log-increment(θ_j, x))` with max-shift stabilisation.
/// Atoms whose multiplicative increment is nonpositive enter with their raw
/// (nonpositive) value.
pub fn mixture_step(weights: &MixtureWeights, fam: &FamilySpec, x: &[f64], t: usize) -> Result<f64> {
    let (p, _) = fam.payoff(x, t)?;
    mixture_eval(weights, fam, &p)
}

pub(crate) fn mixture_eval(weights: &MixtureWeights, fam: &FamilySpec, p: &Payoff) -> Result<f64> {
    let mut pos_w = Vec::new();
    let mut pos_l = Vec::new();
    let mut nonpos = 0.0;
    let mut last_err = None;
    for (theta, &w) in weights.atoms.iter().zip(&weights.weights) {
        match fam.eval(p, theta) {
            Ok(l) => {
                pos_w.push(w);
                pos_l.push(l);
            }
            Err(Error::NonpositiveIncrement { value, step }) => {
                nonpos += w * value;
                last_err = Some(Error::NonpositiveIncrement { value, step });
            }
            Err(e) => return Err(e),
        }
    }
    if pos_w.is_empty() {
        return Err(last_err.unwrap_or(Error::NonpositiveIncrement { value: 0.0, step: p.t }));
    }
    let lse = log_sum_exp_weighted(&pos_w, &pos_l);
    if nonpos == 0.0 {
        return Ok(lse);
    }
    let total = 1.0 + nonpos * (-lse).exp();
    if total <= 0.0 {
        return Err(Error::NonpositiveIncrement { value: total * lse.exp(), step: p.t });
    }
    Ok(lse + total.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{FamilyKind, RegionSpec};
    use crate::functionals::Functional;
    use crate::observation::DataRange;
    use crate::tail_models::PsiSpec;

    fn sub_psi_mean() -> FamilySpec {
        FamilySpec::builder(FamilyKind::SubPsiIdentifiable, Functional::Mean, vec![0.0])
            .psi(PsiSpec::gaussian(1.0).unwrap())
            .fixed_u(1.0)
            .region(RegionSpec::Ball { radius: 5.0, center: None })
            .build()
            .unwrap()
    }

    #[test]
    fn ftl_running_mean_closed_form() {
        let fam = sub_psi_mean();
        let mut s = StrategyState::new(Algorithm::Ftl, &fam, &StrategyOptions::default()).unwrap();
        assert_eq!(s.step(&fam, &[1.0]).unwrap(), 0.0);
        s.step(&fam, &[1.0]).unwrap();
        assert!((s.theta_next()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn first_step_earns_nothing() {
        let fam = FamilySpec::builder(FamilyKind::BoundedIdentifiable, Functional::MeanSd, vec![0.4, 0.4])
            .data_range(DataRange::interval(0.0, 1.0).unwrap())
            .build()
            .unwrap();
        for algo in Algorithm::ALL {
            let mut s = StrategyState::new(algo, &fam, &StrategyOptions::default()).unwrap();
            assert_eq!(s.step(&fam, &[0.3]).unwrap(), 0.0, "{algo}");
        }
    }

    #[test]
    fn ogd_without_gradient_bound_is_config_error() {
        let fam = FamilySpec::builder(FamilyKind::SubPsiIdentifiable, Functional::Mean, vec![0.0])
            .psi(PsiSpec::gaussian(1.0).unwrap())
            .build()
            .unwrap();
        assert!(matches!(StrategyState::new(Algorithm::Ogd, &fam, &StrategyOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn ftrl_sigma_telescopes() {
        let total: f64 = (0..100).map(|i| ftrl_sigma(i, 2.0, 4.0)).sum();
        assert!((total - 0.5 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_of_equal_increments() {
        let fam = sub_psi_mean();
        let w = MixtureWeights::new(vec![vec![0.5], vec![0.5]], vec![0.5, 0.5]).unwrap();
        let g = fam.log_increment(&[0.5], &[0.7], 1).unwrap();
        assert!((mixture_step(&w, &fam, &[0.7], 1).unwrap() - g).abs() < 1e-15);
        assert!(MixtureWeights::new(vec![vec![0.0]], vec![0.9]).is_err());
    }

    #[test]
    fn parse_algorithms() {
        for a in Algorithm::ALL {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        assert!("ons".parse::<Algorithm>().is_err());
    }
}
