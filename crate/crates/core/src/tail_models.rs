//! Sub-ψ tail models.
//!
//! A process `Y` with variance process `V` is sub-ψ when
//!
//! ```text
//!   exp( u (Y_t − Ȳ_t) − V_t ψ(u) )   is a supermartingale for all u ∈ [0, u_max),
//! ```
//!
//! where `Ȳ` is the compensator of `Y`. This module provides the ψ catalog,
//! variance processes, the convex conjugate ψ*, and an exhaustive oracle that
//! checks the condition on finite discrete trees.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discrete::{for_each_node, DiscreteLaw};
use crate::error::{Error, Result};
use crate::numeric::golden_max;

/// Knot table for a custom ψ: quadratic on `[0, u_1]`, piecewise linear
/// between knots and linear with the last slope up to `u_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiTable {
    knots_u: Vec<f64>,
    knots_psi: Vec<f64>,
}

impl PsiTable {
    pub fn new(knots_u: Vec<f64>, knots_psi: Vec<f64>) -> Result<Self> {
        if knots_u.is_empty() || knots_u.len() != knots_psi.len() {
            return Err(Error::Param("custom psi needs matching, non-empty knot lists".into()));
        }
        if knots_u[0] <= 0.0 || knots_u.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Param("custom psi knots must be positive and strictly increasing".into()));
        }
        if knots_psi[0] <= 0.0 || knots_psi.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Param("custom psi values must be positive and nondecreasing".into()));
        }
        let table = Self { knots_u, knots_psi };
        let slopes = table.slopes();
        if slopes.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            return Err(Error::Param("custom psi table is not convex".into()));
        }
        Ok(table)
    }

    /// Slopes: derivative at the end of the quadratic piece, then each
    /// linear segment.
    fn slopes(&self) -> Vec<f64> {
        let mut s = vec![2.0 * self.knots_psi[0] / self.knots_u[0]];
        for i in 1..self.knots_u.len() {
            s.push((self.knots_psi[i] - self.knots_psi[i - 1]) / (self.knots_u[i] - self.knots_u[i - 1]));
        }
        s
    }

    fn eval(&self, u: f64) -> f64 {
        let (u1, p1) = (self.knots_u[0], self.knots_psi[0]);
        if u <= u1 {
            return p1 * (u / u1).powi(2);
        }
        let n = self.knots_u.len();
        for i in 1..n {
            if u <= self.knots_u[i] {
                let (ua, pa) = (self.knots_u[i - 1], self.knots_psi[i - 1]);
                let slope = (self.knots_psi[i] - pa) / (self.knots_u[i] - ua);
                return pa + slope * (u - ua);
            }
        }
        let last = *self.slopes().last().unwrap_or(&0.0);
        self.knots_psi[n - 1] + last * (u - self.knots_u[n - 1])
    }

    fn deriv(&self, u: f64) -> f64 {
        let (u1, p1) = (self.knots_u[0], self.knots_psi[0]);
        if u <= u1 {
            return 2.0 * p1 * u / (u1 * u1);
        }
        let slopes = self.slopes();
        for i in 1..self.knots_u.len() {
            if u <= self.knots_u[i] {
                return slopes[i];
            }
        }
        *slopes.last().unwrap_or(&0.0)
    }

    fn second_deriv(&self, u: f64) -> f64 {
        let (u1, p1) = (self.knots_u[0], self.knots_psi[0]);
        if u < u1 {
            2.0 * p1 / (u1 * u1)
        } else {
            0.0
        }
    }
}

/// The ψ kinds of the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiKind {
    /// `ψ(u) = σ² u² / 2`.
    Gaussian {
        sigma: f64,
    },
    /// `ψ(u) = u² (b − a)² / 8` (Hoeffding's lemma for increments in `[a, b]`).
    HoeffdingFromBounds {
        a: f64,
        b: f64,
    },
    Custom(PsiTable),
}

/// A ψ function together with its domain `[0, u_max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiSpec {
    kind: PsiKind,
    u_max: f64,
}

impl PsiSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Param(format!("gaussian psi needs sigma > 0, got {sigma}")));
        }
        Ok(Self { kind: PsiKind::Gaussian { sigma }, u_max: f64::INFINITY })
    }

    pub fn hoeffding(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::Param(format!("hoeffding psi needs a < b, got [{a}, {b}]")));
        }
        Ok(Self { kind: PsiKind::HoeffdingFromBounds { a, b }, u_max: f64::INFINITY })
    }

    pub fn custom(table: PsiTable, u_max: f64) -> Result<Self> {
        if !(u_max > 0.0 && u_max.is_finite()) {
            return Err(Error::Param("custom psi must declare a finite u_max > 0".into()));
        }
        Ok(Self { kind: PsiKind::Custom(table), u_max })
    }

    pub fn kind(&self) -> &PsiKind {
        &self.kind
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    /// Right derivative at zero; zero for every catalog kind.
    pub fn deriv0(&self) -> f64 {
        0.0
    }

    /// Coefficient `c` when `ψ(u) = c u²` on the whole domain.
    pub fn quadratic_coefficient(&self) -> Option<f64> {
        match self.kind {
            PsiKind::Gaussian { sigma } => Some(0.5 * sigma * sigma),
            PsiKind::HoeffdingFromBounds { a, b } => Some((b - a).powi(2) / 8.0),
            PsiKind::Custom(_) => None,
        }
    }

    /// ψ(u), failing with [`Error::Range`] outside `[0, u_max)`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0 && u < self.u_max) {
            return Err(Error::Range { u, u_max: self.u_max });
        }
        Ok(self.eval_unchecked(u))
    }

    pub(crate) fn eval_unchecked(&self, u: f64) -> f64 {
        match &self.kind {
            PsiKind::Custom(t) => t.eval(u),
            _ => self.quadratic_coefficient().unwrap_or(0.0) * u * u,
        }
    }

    pub(crate) fn deriv(&self, u: f64) -> f64 {
        match &self.kind {
            PsiKind::Custom(t) => t.deriv(u),
            _ => 2.0 * self.quadratic_coefficient().unwrap_or(0.0) * u,
        }
    }

    pub(crate) fn second_deriv(&self, u: f64) -> f64 {
        match &self.kind {
            PsiKind::Custom(t) => t.second_deriv(u),
            _ => 2.0 * self.quadratic_coefficient().unwrap_or(0.0),
        }
    }

    /// Convex conjugate `ψ*(c) = sup_{u ∈ [0, u_max)} u c − ψ(u)`.
    ///
    /// Closed form for the Gaussian kind; golden-section search (bracket
    /// tolerance 1e-10) otherwise.
    pub fn conjugate(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        match self.kind {
            PsiKind::Gaussian { sigma } => c * c / (2.0 * sigma * sigma),
            _ => {
                let obj = |u: f64| u * c - self.eval_unchecked(u);
                let hi = if self.u_max.is_finite() {
                    // stay strictly inside the open domain
                    self.u_max * (1.0 - 1e-12)
                } else {
                    let mut hi = 1.0;
                    while self.deriv(hi) < c && hi < 1e12 {
                        hi *= 2.0;
                    }
                    hi
                };
                golden_max(0.0, hi, 1e-10, obj).1.max(0.0)
            }
        }
    }
}

impl fmt::Display for PsiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PsiKind::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            PsiKind::HoeffdingFromBounds { a, b } => write!(f, "hoeffding:{a}:{b}"),
            PsiKind::Custom(t) => {
                write!(f, "custom:{}", self.u_max)?;
                for (u, p) in t.knots_u.iter().zip(&t.knots_psi) {
                    write!(f, ":{u}/{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for PsiSpec {
    type Err = Error;

    /// Parses `gaussian:<σ>`, `hoeffding:<a>:<b>` or
    /// `custom:<u_max>:<u1>/<ψ1>:<u2>/<ψ2>...`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num =
            |v: &str| v.parse::<f64>().map_err(|e| Error::Parse(format!("bad number `{v}` in psi spec `{s}`: {e}")));
        match parts.as_slice() {
            ["gaussian"] => Self::gaussian(1.0),
            ["gaussian", sigma] => Self::gaussian(num(sigma)?),
            ["hoeffding", a, b] => Self::hoeffding(num(a)?, num(b)?),
            ["custom", u_max, knots @ ..] if !knots.is_empty() => {
                let mut us = Vec::new();
                let mut ps = Vec::new();
                for k in knots {
                    let (u, p) = k
                        .split_once('/')
                        .ok_or_else(|| Error::Parse(format!("custom psi knot `{k}` must be u/psi")))?;
                    us.push(num(u)?);
                    ps.push(num(p)?);
                }
                Self::custom(PsiTable::new(us, ps)?, num(u_max)?)
            }
            _ => Err(Error::Parse(format!(
                "unknown psi spec `{s}` (expected gaussian:<sigma>, hoeffding:<a>:<b>, custom:<u_max>:<u>/<psi>...)"
            ))),
        }
    }
}

/// Per-step variance increments `v_t`, with `V_t = Σ_{i≤t} v_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
#[derive(Default)]
pub enum VarianceProcess {
    /// `v_t = 1`, so `V_t = t`.
    #[default]
    UnitPerStep,
    CustomSequence {
        values: Vec<f64>,
    },
}

impl VarianceProcess {
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Param("variance increments must be finite and nonnegative".into()));
        }
        Ok(Self::CustomSequence { values })
    }

    /// Increment `v_t` for the 1-based step `t`.
    pub fn increment(&self, t: usize) -> Result<f64> {
        match self {
            Self::UnitPerStep => Ok(1.0),
            Self::CustomSequence { values } => values.get(t.wrapping_sub(1)).copied().ok_or_else(|| {
                Error::Size(format!("variance sequence has {} entries, step {t} requested", values.len()))
            }),
        }
    }

    /// `V_t`; `V_0 = 0`.
    pub fn cumulative(&self, t: usize) -> Result<f64> {
        (1..=t).map(|i| self.increment(i)).sum()
    }

    /// Largest per-step increment, if the process is bounded.
    pub fn max_increment(&self) -> f64 {
        match self {
            Self::UnitPerStep => 1.0,
            Self::CustomSequence { values } => values.iter().copied().fold(0.0, f64::max),
        }
    }

    pub(crate) fn min_increment(&self) -> f64 {
        match self {
            Self::UnitPerStep => 1.0,
            Self::CustomSequence { values } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// A finite tree model for a scalar process: `law(history)` is the
/// conditional law of the next increment ΔY given past increments.
pub struct TreeModel<'a> {
    pub depth: usize,
    pub law: Box<dyn Fn(&[f64]) -> DiscreteLaw<f64> + 'a>,
}

/// Whether increments are centred at their conditional mean before
/// exponentiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    Centered,
    Uncentered,
}

/// One failing (node, u) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub history: Vec<f64>,
    pub u: f64,
    pub conditional_expectation: f64,
}

/// Result of an exhaustive sub-ψ check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubPsiReport {
    pub nodes: usize,
    pub max_conditional_expectation: f64,
    /// Largest conditional mean of ΔY over all nodes.
    pub max_conditional_mean: f64,
    pub violations: Vec<Violation>,
}

impl SubPsiReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Tolerance above 1 tolerated for conditional expectations.
pub const SUPERMARTINGALE_SLACK: f64 = 1e-12;

/// Exhaustively evaluates `E[exp(u (ΔY − c) − v_t ψ(u)) | node]` at every
/// node and every `u` in the grid, where `c` is the conditional mean when
/// centred and zero otherwise.
pub fn verify_sub_psi_discrete(
    model: &TreeModel<'_>,
    psi: &PsiSpec,
    variance: &VarianceProcess,
    u_grid: &[f64],
    centering: Centering,
) -> Result<SubPsiReport> {
    let psi_vals: Vec<f64> = u_grid.iter().map(|&u| psi.eval(u)).collect::<Result<_>>()?;
    let mut max_ce = f64::NEG_INFINITY;
    let mut max_mean = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    let nodes = for_each_node(model.depth, &*model.law, &mut |hist, law| {
        let v = variance.increment(hist.len() + 1)?;
        let mean = law.expect(|d| *d);
        max_mean = max_mean.max(mean);
        let shift = match centering {
            Centering::Centered => mean,
            Centering::Uncentered => 0.0,
        };
        for (&u, &pv) in u_grid.iter().zip(&psi_vals) {
            let ce = law.expect(|d| (u * (d - shift) - v * pv).exp());
            max_ce = max_ce.max(ce);
            if ce > 1.0 + SUPERMARTINGALE_SLACK {
                violations.push(Violation { history: hist.to_vec(), u, conditional_expectation: ce });
            }
        }
        Ok(())
    })?;
    Ok(SubPsiReport { nodes, max_conditional_expectation: max_ce, max_conditional_mean: max_mean, violations })
}
