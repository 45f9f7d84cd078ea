//! Catalog of statistical functionals with their scoring and identification
//! functions.
//!
//! ```text
//!   functional        score s(λ, x)                       identification m(λ, x)
//!   mean              ½ (x − λ)²                          x − λ
//!   quantile(α)       |x − λ| ((1−α)1{x<λ} + α 1{x>λ})    1{x ≤ λ} − α
//!   regression(k)     ½ (⟨λ, x⟩ − y)²                     (⟨λ, x⟩ − y) x / ‖x‖
//!   mean_sd           none                                (λ_μ − x, λ_μ² + λ_σ² − x²)
//!   var_cvar(α₀)      none                                (1{x ≤ λ_v} − α₀, x 1{x ≤ λ_v} − α₀ λ_c)
//! ```
//!
//! Every score is convex in λ and strictly consistent; every identification
//! function has `E m(T(P), X) = 0`. The quantile uses the standard lower-tail
//! convention: `quantile(0.05)` is the 5% quantile.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::discrete::DiscreteLaw;
use crate::error::{check_dim, Error, Result};
use crate::numeric::{bisect_increasing, dot, norm, simpson, solve_dense};
use crate::observation::DataRange;

/// A statistical functional from the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    Mean,
    Quantile { alpha: f64 },
    Regression { k: usize },
    MeanSd,
    VarCvar { alpha0: f64 },
}

fn check_level(name: &str, a: f64) -> Result<()> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must lie in (0, 1), got {a}")))
    }
}

impl Functional {
    pub fn quantile(alpha: f64) -> Result<Self> {
        check_level("quantile level", alpha)?;
        Ok(Self::Quantile { alpha })
    }

    pub fn regression(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Param("regression needs at least one covariate".into()));
        }
        Ok(Self::Regression { k })
    }

    pub fn var_cvar(alpha0: f64) -> Result<Self> {
        check_level("tail level", alpha0)?;
        Ok(Self::VarCvar { alpha0 })
    }

    /// Re-validates the embedded levels (useful after deserialisation).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Quantile { alpha } => check_level("quantile level", alpha),
            Self::VarCvar { alpha0 } => check_level("tail level", alpha0),
            Self::Regression { k } if k == 0 => Err(Error::Param("regression needs k >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Dimension of the parameter λ.
    pub fn param_dim(&self) -> usize {
        match self {
            Self::Mean | Self::Quantile { .. } => 1,
            Self::Regression { k } => *k,
            Self::MeanSd | Self::VarCvar { .. } => 2,
        }
    }

    /// Dimension of a single observation.
    pub fn obs_dim(&self) -> usize {
        match self {
            Self::Regression { k } => k + 1,
            _ => 1,
        }
    }

    pub fn has_score(&self) -> bool {
        matches!(self, Self::Mean | Self::Quantile { .. } | Self::Regression { .. })
    }

    pub fn has_ident(&self) -> bool {
        true
    }

    /// Sign `o` with `m(λ, x) = o · ∂_λ s(λ, x)` whenever that relation holds
    /// exactly; `None` for functionals without a score or where `m` is a
    /// rescaled gradient.
    pub fn ident_orientation(&self) -> Option<f64> {
        match self {
            Self::Mean => Some(-1.0),
            Self::Quantile { .. } => Some(1.0),
            _ => None,
        }
    }

    /// Whether the identification function has jumps in x (indicator terms).
    pub(crate) fn ident_breakpoints(&self, lambda: &[f64]) -> Vec<f64> {
        match self {
            Self::Quantile { .. } => vec![lambda[0]],
            Self::VarCvar { .. } => vec![lambda[0]],
            Self::Mean | Self::MeanSd => vec![lambda[0]],
            Self::Regression { .. } => vec![0.0],
        }
    }

    /// Checks that `λ` lies in the parameter space Λ of the functional.
    pub fn check_param(&self, lambda: &[f64]) -> Result<()> {
        check_dim(self.param_dim(), lambda.len())?;
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("parameter {lambda:?} is not finite")));
        }
        match self {
            Self::MeanSd if lambda[1] < 0.0 => {
                Err(Error::Domain(format!("standard deviation component must be nonnegative, got {}", lambda[1])))
            }
            Self::VarCvar { .. } if lambda[1] > lambda[0] => {
                Err(Error::Domain(format!("expected shortfall {} exceeds value at risk {}", lambda[1], lambda[0])))
            }
            _ => Ok(()),
        }
    }

    fn check_obs(&self, x: &[f64]) -> Result<()> {
        check_dim(self.obs_dim(), x.len())
    }

    /// Scoring function s(λ, x).
    pub fn score(&self, lambda: &[f64], x: &[f64]) -> Result<f64> {
        self.check_param(lambda)?;
        self.check_obs(x)?;
        self.score_raw(lambda, x)
    }

    /// Score without parameter-space validation; used on hot paths once the
    /// caller has validated its domain.
    pub(crate) fn score_raw(&self, lambda: &[f64], x: &[f64]) -> Result<f64> {
        match *self {
            Self::Mean => Ok(0.5 * (x[0] - lambda[0]).powi(2)),
            Self::Quantile { alpha } => {
                let d = x[0] - lambda[0];
                Ok(if d < 0.0 { -d * (1.0 - alpha) } else { d * alpha })
            }
            Self::Regression { k } => {
                let r = dot(lambda, &x[..k]) - x[k];
                Ok(0.5 * r * r)
            }
            _ => Err(Error::UnsupportedScore(self.to_string())),
        }
    }

    /// Gradient (a subgradient for the quantile) of the score in λ, written
    /// into `out`.
    pub(crate) fn score_grad(&self, lambda: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        match *self {
            Self::Mean => out[0] = lambda[0] - x[0],
            Self::Quantile { alpha } => {
                out[0] = if x[0] <= lambda[0] { 1.0 - alpha } else { -alpha };
            }
            Self::Regression { k } => {
                let r = dot(lambda, &x[..k]) - x[k];
                for (o, xi) in out.iter_mut().zip(&x[..k]) {
                    *o = r * xi;
                }
            }
            _ => return Err(Error::UnsupportedScore(self.to_string())),
        }
        Ok(())
    }

    /// Hessian of the score in λ (row-major), zero where the score is
    /// piecewise linear.
    pub(crate) fn score_hess(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match *self {
            Self::Mean => out[0] = 1.0,
            Self::Quantile { .. } => out[0] = 0.0,
            Self::Regression { k } => {
                for i in 0..k {
                    for j in 0..k {
                        out[i * k + j] = x[i] * x[j];
                    }
                }
            }
            _ => return Err(Error::UnsupportedScore(self.to_string())),
        }
        Ok(())
    }

    /// Whether the score is twice differentiable in λ (so Newton steps apply).
    pub(crate) fn score_is_smooth(&self) -> bool {
        !matches!(self, Self::Quantile { .. })
    }

    /// Identification function m(λ, x).
    pub fn ident(&self, lambda: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_param(lambda)?;
        self.check_obs(x)?;
        let mut out = vec![0.0; self.param_dim()];
        self.ident_into(lambda, x, &mut out)?;
        Ok(out)
    }

    /// Writes m(λ, x) into `out` without parameter-space validation.
    pub(crate) fn ident_into(&self, lambda: &[f64], x: &[f64], out: &mut [f64]) -> Result<()> {
        match *self {
            Self::Mean => out[0] = x[0] - lambda[0],
            Self::Quantile { alpha } => {
                out[0] = if x[0] <= lambda[0] { 1.0 - alpha } else { -alpha };
            }
            Self::Regression { k } => {
                let xs = &x[..k];
                let n = norm(xs);
                if n == 0.0 {
                    return Err(Error::DegenerateInput("regression covariate vector has zero norm".into()));
                }
                let r = dot(lambda, xs) - x[k];
                for (o, xi) in out.iter_mut().zip(xs) {
                    *o = r * xi / n;
                }
            }
            Self::MeanSd => {
                let (mu, sd) = (lambda[0], lambda[1]);
                out[0] = mu - x[0];
                out[1] = mu * mu + sd * sd - x[0] * x[0];
            }
            Self::VarCvar { alpha0 } => {
                let below = x[0] <= lambda[0];
                out[0] = if below { 1.0 - alpha0 } else { -alpha0 };
                out[1] = if below { x[0] } else { 0.0 } - alpha0 * lambda[1];
            }
        }
        Ok(())
    }

    /// Uniform bound on ‖m(λ₀, x)‖ over the declared data range, or `None`
    /// when the identification function is unbounded there.
    pub fn ident_bound(&self, lambda0: &[f64], range: &DataRange) -> Option<f64> {
        if self.check_param(lambda0).is_err() || range.dim() != self.obs_dim() {
            return None;
        }
        match *self {
            Self::Quantile { alpha } => Some(alpha.max(1.0 - alpha)),
            Self::Regression { .. } => None,
            _ if !range.is_bounded() => None,
            Self::Mean => {
                let (lo, hi) = (range.lo()[0], range.hi()[0]);
                Some((lo - lambda0[0]).abs().max((hi - lambda0[0]).abs()))
            }
            Self::MeanSd => {
                let (lo, hi) = (range.lo()[0], range.hi()[0]);
                let (mu, sd) = (lambda0[0], lambda0[1]);
                let a = (mu - lo).abs().max((mu - hi).abs());
                let sq_min = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { (lo * lo).min(hi * hi) };
                let sq_max = (lo * lo).max(hi * hi);
                let c = mu * mu + sd * sd;
                let b = (c - sq_min).abs().max((c - sq_max).abs());
                Some(a.hypot(b))
            }
            Self::VarCvar { alpha0 } => {
                let (lo, hi) = (range.lo()[0], range.hi()[0]);
                let a = alpha0.max(1.0 - alpha0);
                let shift = alpha0 * lambda0[1];
                let mut b = shift.abs();
                if lo <= lambda0[0] {
                    let top = hi.min(lambda0[0]);
                    b = b.max((lo - shift).abs()).max((top - shift).abs());
                }
                Some(a.hypot(b))
            }
        }
    }

    /// The true value T(P) under a reference distribution.
    pub fn true_value(&self, reference: &ReferenceDistribution) -> Result<Vec<f64>> {
        self.validate()?;
        let unsupported = || Error::UnsupportedPair { functional: self.to_string(), reference: reference.to_string() };
        match reference {
            ReferenceDistribution::Beta { a, b } => {
                let (a, b) = (*a, *b);
                match *self {
                    Self::Mean => Ok(vec![a / (a + b)]),
                    Self::Quantile { alpha } => Ok(vec![beta_quantile(a, b, alpha)]),
                    Self::MeanSd => {
                        let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
                        Ok(vec![a / (a + b), var.sqrt()])
                    }
                    Self::VarCvar { alpha0 } => {
                        let var = beta_quantile(a, b, alpha0);
                        let lnb = ln_beta(a, b);
                        let integrand = |x: f64| {
                            if x <= 0.0 {
                                0.0
                            } else {
                                (a * x.ln() + (b - 1.0) * (-x).ln_1p() - lnb).exp()
                            }
                        };
                        let partial = simpson(0.0, var, 1e-13, &integrand);
                        Ok(vec![var, partial / alpha0])
                    }
                    Self::Regression { .. } => Err(unsupported()),
                }
            }
            ReferenceDistribution::Gaussian { mean, sd } => gaussian_value(self, *mean, *sd).ok_or_else(unsupported),
            ReferenceDistribution::Ar1 { beta, noise_sd } => {
                let marginal_sd = noise_sd / (1.0 - beta * beta).sqrt();
                match *self {
                    Self::Regression { k: 1 } => Ok(vec![*beta]),
                    Self::Regression { .. } => Err(unsupported()),
                    _ => gaussian_value(self, 0.0, marginal_sd).ok_or_else(unsupported),
                }
            }
            ReferenceDistribution::Discrete(law) => discrete_value(self, law).ok_or_else(unsupported),
        }
    }
}

fn beta_quantile(a: f64, b: f64, level: f64) -> f64 {
    bisect_increasing(0.0, 1.0, 1e-14, |x| beta_reg(a, b, x) - level)
}

fn gaussian_value(f: &Functional, mean: f64, sd: f64) -> Option<Vec<f64>> {
    let z = |level: f64| Normal::standard().inverse_cdf(level);
    match *f {
        Functional::Mean => Some(vec![mean]),
        Functional::Quantile { alpha } => Some(vec![mean + sd * z(alpha)]),
        Functional::MeanSd => Some(vec![mean, sd]),
        Functional::VarCvar { alpha0 } => {
            let q = z(alpha0);
            let phi = (-0.5 * q * q).exp() / (2.0 * std::f64::consts::PI).sqrt();
            Some(vec![mean + sd * q, mean - sd * phi / alpha0])
        }
        Functional::Regression { .. } => None,
    }
}

fn discrete_value(f: &Functional, law: &DiscreteLaw<Vec<f64>>) -> Option<Vec<f64>> {
    if law.atoms().iter().any(|a| a.len() != f.obs_dim()) {
        return None;
    }
    match *f {
        Functional::Mean => Some(vec![law.expect(|a| a[0])]),
        Functional::MeanSd => {
            let m = law.expect(|a| a[0]);
            let v = law.expect(|a| (a[0] - m).powi(2));
            Some(vec![m, v.sqrt()])
        }
        Functional::Quantile { alpha } => {
            let mut pairs: Vec<(f64, f64)> = law.iter().map(|(a, p)| (a[0], p)).collect();
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut cdf = 0.0;
            for (x, p) in pairs {
                cdf += p;
                if cdf >= alpha - 1e-12 {
                    return Some(vec![x]);
                }
            }
            None
        }
        Functional::Regression { k } => {
            let mut a = vec![0.0; k * k];
            let mut b = vec![0.0; k];
            for (atom, p) in law.iter() {
                let xs = &atom[..k];
                let n = norm(xs);
                if n == 0.0 {
                    continue;
                }
                for i in 0..k {
                    b[i] += p * atom[k] * xs[i] / n;
                    for j in 0..k {
                        a[i * k + j] += p * xs[i] * xs[j] / n;
                    }
                }
            }
            solve_dense(&a, &b)
        }
        Functional::VarCvar { .. } => None,
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mean => write!(f, "mean"),
            Self::Quantile { alpha } => write!(f, "quantile:{alpha}"),
            Self::Regression { k } => write!(f, "regression:{k}"),
            Self::MeanSd => write!(f, "mean_sd"),
            Self::VarCvar { alpha0 } => write!(f, "var_cvar:{alpha0}"),
        }
    }
}

impl FromStr for Functional {
    type Err = Error;

    /// Parses `mean`, `quantile:<α>`, `regression:<k>`, `mean_sd` or
    /// `var_cvar:<α₀>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = |what: &str| -> Result<f64> {
            arg.ok_or_else(|| Error::Parse(format!("functional `{name}` needs {what}")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad {what} in `{s}`: {e}")))
        };
        match name {
            "mean" => Ok(Self::Mean),
            "mean_sd" => Ok(Self::MeanSd),
            "quantile" => Self::quantile(num("a level")?),
            "var_cvar" => Self::var_cvar(num("a tail level")?),
            "regression" => {
                let k = arg
                    .unwrap_or("1")
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad covariate count in `{s}`: {e}")))?;
                Self::regression(k)
            }
            other => Err(Error::Parse(format!(
                "unknown functional `{other}` (expected mean, quantile:<a>, regression:<k>, mean_sd, var_cvar:<a>)"
            ))),
        }
    }
}

/// Reference laws under which true values can be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceDistribution {
    Beta {
        a: f64,
        b: f64,
    },
    Gaussian {
        mean: f64,
        sd: f64,
    },
    /// Stationary Gaussian AR(1) `X_t = β X_{t-1} + ε_t`, `ε_t ~ N(0, noise_sd²)`.
    Ar1 {
        beta: f64,
        noise_sd: f64,
    },
    /// Finite law over observation vectors.
    Discrete(DiscreteLaw<Vec<f64>>),
}

impl fmt::Display for ReferenceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Beta { a, b } => write!(f, "beta({a}, {b})"),
            Self::Gaussian { mean, sd } => write!(f, "normal({mean}, {sd})"),
            Self::Ar1 { beta, noise_sd } => write!(f, "ar1(beta={beta}, noise_sd={noise_sd})"),
            Self::Discrete(l) => write!(f, "discrete({} atoms)", l.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn quantile_score_examples() {
        let q = Functional::quantile(0.5).unwrap();
        assert_eq!(q.score(&[0.0], &[1.0]).unwrap(), 0.5);
        let q05 = Functional::quantile(0.05).unwrap();
        assert!(close(q05.score(&[0.1], &[0.0]).unwrap(), 0.095, 1e-15));
        assert!(close(q05.score(&[0.1], &[0.3]).unwrap(), 0.01, 1e-15));
    }

    #[test]
    fn quantile_ident_is_lower_tail_indicator() {
        let q = Functional::quantile(0.05).unwrap();
        assert!(close(q.ident(&[0.1], &[0.2]).unwrap()[0], -0.05, 1e-15));
        assert!(close(q.ident(&[0.1], &[0.1]).unwrap()[0], 0.95, 1e-15));
        assert!(close(q.ident(&[0.1], &[0.0]).unwrap()[0], 0.95, 1e-15));
    }

    #[test]
    fn mean_score_and_ident() {
        let m = Functional::Mean;
        assert_eq!(m.score(&[0.25], &[0.75]).unwrap(), 0.125);
        assert_eq!(m.ident(&[0.25], &[0.75]).unwrap(), vec![0.5]);
    }

    #[test]
    fn regression_ident_normalises() {
        let r = Functional::regression(2).unwrap();
        let m = r.ident(&[1.0, 0.0], &[3.0, 4.0, 1.0]).unwrap();
        // residual 2, x / |x| = (0.6, 0.8)
        assert!(close(m[0], 1.2, 1e-15) && close(m[1], 1.6, 1e-15));
        assert!(matches!(r.ident(&[1.0, 0.0], &[0.0, 0.0, 1.0]), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn unsupported_scores() {
        assert!(matches!(Functional::MeanSd.score(&[0.0, 1.0], &[0.0]), Err(Error::UnsupportedScore(_))));
        let vc = Functional::var_cvar(0.05).unwrap();
        assert!(matches!(vc.score(&[0.2, 0.1], &[0.0]), Err(Error::UnsupportedScore(_))));
    }

    #[test]
    fn var_cvar_domain() {
        let vc = Functional::var_cvar(0.05).unwrap();
        assert!(vc.check_param(&[0.1, 0.2]).is_err());
        assert!(vc.check_param(&[0.2, 0.1]).is_ok());
        let m = vc.ident(&[0.2, 0.1], &[0.15]).unwrap();
        assert!(close(m[0], 0.95, 1e-15) && close(m[1], 0.145, 1e-15));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["mean", "quantile:0.05", "regression:2", "mean_sd", "var_cvar:0.05"] {
            let f: Functional = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("quantile:1.5".parse::<Functional>().is_err());
        assert!("median".parse::<Functional>().is_err());
    }

    #[test]
    fn beta_true_values() {
        let r = ReferenceDistribution::Beta { a: 2.0, b: 5.0 };
        let ms = Functional::MeanSd.true_value(&r).unwrap();
        assert!(close(ms[0], 2.0 / 7.0, 1e-15));
        assert!(close(ms[1], (10.0_f64 / 392.0).sqrt(), 1e-15));
    }

    #[test]
    fn ar1_regression_true_value_is_beta() {
        let r = ReferenceDistribution::Ar1 { beta: 0.5, noise_sd: 0.8_f64.sqrt() };
        assert_eq!(Functional::regression(1).unwrap().true_value(&r).unwrap(), vec![0.5]);
        assert!(matches!(Functional::regression(2).unwrap().true_value(&r), Err(Error::UnsupportedPair { .. })));
    }

    #[test]
    fn ident_bound_examples() {
        let unit = DataRange::interval(0.0, 1.0).unwrap();
        assert_eq!(Functional::Mean.ident_bound(&[0.25], &unit), Some(0.75));
        assert_eq!(Functional::quantile(0.05).unwrap().ident_bound(&[0.0], &DataRange::unbounded(1)), Some(0.95));
        assert_eq!(Functional::Mean.ident_bound(&[0.0], &DataRange::unbounded(1)), None);
        assert_eq!(Functional::regression(1).unwrap().ident_bound(&[0.0], &DataRange::unbounded(2)), None);
    }
}
