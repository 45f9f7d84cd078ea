//! Test-supermartingale families indexed by a betting parameter θ.
//!
//! ```text
//!   kind                   θ          log increment at observation x (step t)
//!   bounded_elicitable     λ          log(1 + s(λ₀,x) − s(λ,x))
//!   bounded_identifiable   η          log(1 + ⟨η, m(λ₀,x)⟩)
//!   subpsi_elicitable      (λ, u)     u (s(λ₀,x) − s(λ,x)) − v_t ψ(u ‖λ − λ₀‖)
//!   subpsi_identifiable    (η, u)     u ⟨η, m(λ₀,x)⟩ − v_t ψ(u ‖η‖)
//! ```
//!
//! In the sub-ψ kinds ψ is applied to the bet size `u‖η‖` (resp. `u‖λ−λ₀‖`):
//! the increment along a unit direction is sub-ψ, and scaling the direction
//! scales the argument of ψ. For quadratic ψ this is `‖η‖² ψ(u)`.
//!
//! Under the null each family is a test supermartingale for every fixed θ in
//! its domain, and θ ↦ log L_t^θ is concave for every certified
//! parametrisation, which is what the online strategies rely on.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::functionals::Functional;
use crate::numeric::{dot, norm};
use crate::observation::{cartesian, DataRange, Observation};
use crate::tail_models::{PsiSpec, VarianceProcess};

/// Default admissibility margin ε: bounded kinds keep `1 + increment ≥ ε`.
pub const DEFAULT_MARGIN: f64 = 1e-3;

const SCAN_BUDGET: usize = 4001;

// ── Kinds ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    BoundedElicitable,
    BoundedIdentifiable,
    SubPsiElicitable,
    SubPsiIdentifiable,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 4] =
        [Self::BoundedElicitable, Self::BoundedIdentifiable, Self::SubPsiElicitable, Self::SubPsiIdentifiable];

    pub fn is_elicitable(self) -> bool {
        matches!(self, Self::BoundedElicitable | Self::SubPsiElicitable)
    }

    pub fn is_sub_psi(self) -> bool {
        matches!(self, Self::SubPsiElicitable | Self::SubPsiIdentifiable)
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::BoundedElicitable => "bounded_elicitable",
            Self::BoundedIdentifiable => "bounded_identifiable",
            Self::SubPsiElicitable => "subpsi_elicitable",
            Self::SubPsiIdentifiable => "subpsi_identifiable",
        })
    }
}

impl FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s.trim())
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown family `{s}` (expected bounded_elicitable, bounded_identifiable, subpsi_elicitable, subpsi_identifiable)"
                ))
            })
    }
}

// ── Parameter domains ────────────────────────────────────────────────────

/// A convex region for the base parameter (η or λ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Param("box bounds must be non-empty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
            return Err(Error::Param(format!("invalid box {lo:?} .. {hi:?}")));
        }
        Ok(Self::Box { lo, hi })
    }

    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) || !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::Param(format!("invalid ball centre {center:?} radius {radius}")));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lo, .. } => lo.len(),
            Self::Ball { center, .. } => center.len(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            Self::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            Self::Ball { center, .. } => center.clone(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Self::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt(),
            Self::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Largest Euclidean norm of a point of the region measured from `origin`.
    pub fn max_distance_from(&self, origin: &[f64]) -> f64 {
        match self {
            Self::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(origin)
                .map(|((a, b), o)| (a - o).abs().max((b - o).abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            Self::Ball { center, radius } => {
                let d: Vec<f64> = center.iter().zip(origin).map(|(c, o)| c - o).collect();
                norm(&d) + radius
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Self::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= a - tol && *v <= b + tol),
            Self::Ball { center, radius } => {
                let d: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
                d <= radius + tol
            }
        }
    }

    /// Exact Euclidean projection: coordinate clipping for boxes, radial
    /// rescaling for balls.
    pub fn project(&self, x: &mut [f64]) {
        match self {
            Self::Box { lo, hi } => {
                for ((v, a), b) in x.iter_mut().zip(lo).zip(hi) {
                    *v = v.clamp(*a, *b);
                }
            }
            Self::Ball { center, radius } => {
                let d: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
                if d > *radius {
                    let s = if d > 0.0 { radius / d } else { 0.0 };
                    for (v, c) in x.iter_mut().zip(center) {
                        *v = c + (*v - c) * s;
                    }
                }
            }
        }
    }

    /// Vertices of a box (empty for balls).
    pub(crate) fn vertices(&self) -> Vec<Vec<f64>> {
        match self {
            Self::Box { lo, hi } => {
                let axes: Vec<Vec<f64>> =
                    lo.iter().zip(hi).map(|(a, b)| if a == b { vec![*a] } else { vec![*a, *b] }).collect();
                cartesian(&axes)
            }
            Self::Ball { .. } => Vec::new(),
        }
    }

    /// Bounding box `(lo, hi)`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Self::Box { lo, hi } => (lo.clone(), hi.clone()),
            Self::Ball { center, radius } => {
                (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
            }
        }
    }

    /// Regular grid with `n` points per axis restricted to the region.
    pub(crate) fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = self.bounds();
        let axes: Vec<Vec<f64>> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| {
                if n <= 1 || a == b {
                    vec![0.5 * (a + b)]
                } else {
                    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
                }
            })
            .collect();
        cartesian(&axes).into_iter().filter(|p| self.contains(p, 1e-12)).collect()
    }
}

/// Region as written in configuration; a ball without an explicit centre is
/// centred at the family's natural origin (0 for η, λ₀ for λ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegionSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { radius: f64, center: Option<Vec<f64>> },
}

impl RegionSpec {
    fn resolve(&self, origin: &[f64]) -> Result<Region> {
        match self {
            Self::Box { lo, hi } => Region::new_box(lo.clone(), hi.clone()),
            Self::Ball { radius, center } => {
                Region::new_ball(center.clone().unwrap_or_else(|| origin.to_vec()), *radius)
            }
        }
    }
}

impl fmt::Display for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Box { lo, hi } => {
                let parts: Vec<String> = lo.iter().zip(hi).map(|(a, b)| format!("{a}:{b}")).collect();
                write!(f, "box:{}", parts.join(","))
            }
            Self::Ball { radius, center: None } => write!(f, "ball:{radius}"),
            Self::Ball { radius, center: Some(c) } => {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                write!(f, "ball:{radius}@{}", parts.join(","))
            }
        }
    }
}

impl FromStr for RegionSpec {
    type Err = Error;

    /// Parses `box:<lo>:<hi>[,<lo>:<hi>...]` or `ball:<r>[@<c1>,<c2>...]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::Parse(format!("region `{s}`: {m}"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| bad(format!("bad number `{v}`: {e}")));
        if let Some(rest) = s.strip_prefix("box:") {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for pair in rest.split(',') {
                let (a, b) = pair.split_once(':').ok_or_else(|| bad("box axes must be lo:hi".into()))?;
                lo.push(num(a)?);
                hi.push(num(b)?);
            }
            Ok(Self::Box { lo, hi })
        } else if let Some(rest) = s.strip_prefix("ball:") {
            let (r, c) = match rest.split_once('@') {
                Some((r, c)) => (r, Some(c.split(',').map(num).collect::<Result<Vec<f64>>>()?)),
                None => (rest, None),
            };
            Ok(Self::Ball { radius: num(r)?, center: c })
        } else {
            Err(bad("expected box:... or ball:...".into()))
        }
    }
}

/// The u-coordinate of sub-ψ families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UCoordinate {
    /// u is held fixed (a u-slice of the domain).
    Fixed { u: f64 },
    /// u is a free coordinate in `[lo, hi]`, appended after the base parameter.
    Free { lo: f64, hi: f64 },
}

/// The admissible set Θ of betting parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaDomain {
    pub region: Region,
    pub u: Option<UCoordinate>,
}

impl ThetaDomain {
    pub fn dim(&self) -> usize {
        self.region.dim() + usize::from(matches!(self.u, Some(UCoordinate::Free { .. })))
    }

    pub fn center(&self) -> Vec<f64> {
        let mut c = self.region.center();
        if let Some(UCoordinate::Free { lo, hi }) = self.u {
            c.push(0.5 * (lo + hi));
        }
        c
    }

    pub fn diameter(&self) -> f64 {
        let d = self.region.diameter();
        match self.u {
            Some(UCoordinate::Free { lo, hi }) => d.hypot(hi - lo),
            _ => d,
        }
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        if theta.len() != self.dim() {
            return false;
        }
        let k = self.region.dim();
        let base_ok = self.region.contains(&theta[..k], tol);
        match self.u {
            Some(UCoordinate::Free { lo, hi }) => base_ok && theta[k] >= lo - tol && theta[k] <= hi + tol,
            _ => base_ok,
        }
    }

    pub fn project(&self, theta: &mut [f64]) {
        let k = self.region.dim();
        self.region.project(&mut theta[..k]);
        if let Some(UCoordinate::Free { lo, hi }) = self.u {
            theta[k] = theta[k].clamp(lo, hi);
        }
    }

    /// Splits θ into the base parameter and the u value (1 for bounded kinds).
    pub(crate) fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], f64) {
        let k = self.region.dim();
        match self.u {
            Some(UCoordinate::Fixed { u }) => (&theta[..k], u),
            Some(UCoordinate::Free { .. }) => (&theta[..k], theta[k]),
            None => (&theta[..k], 1.0),
        }
    }

    pub fn is_singleton(&self) -> bool {
        self.diameter() == 0.0
    }

    /// Grid over Θ with `n` points per axis.
    pub(crate) fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let base = self.region.grid(n);
        match self.u {
            Some(UCoordinate::Free { lo, hi }) => {
                let us: Vec<f64> = if n <= 1 || lo == hi {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
                };
                base.iter()
                    .flat_map(|b| {
                        us.iter().map(move |u| {
                            let mut p = b.clone();
                            p.push(*u);
                            p
                        })
                    })
                    .collect()
            }
            _ => base,
        }
    }
}

// ── Per-observation payoffs ───────────────────────────────────────────────

/// The part of an observation a family needs to evaluate its increment at
/// any θ.
#[derive(Debug, Clone, PartialEq)]
pub enum PayoffTerm {
    /// Identifiable kinds: `m(λ₀, x)`.
    Linear(Vec<f64>),
    /// Elicitable kinds: `s(λ₀, x)` and the raw observation.
    Score { s0: f64, x: Vec<f64> },
}

/// One observation's payoff, ready for evaluation at any θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Payoff {
    /// 1-based step index.
    pub t: usize,
    /// Variance increment `v_t` (zero for bounded kinds).
    pub v: f64,
    pub term: PayoffTerm,
}

/// Result of a concavity certification.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConcavityCertificate {
    Certified,
    Uncertified { reason: String },
}

impl ConcavityCertificate {
    pub fn is_certified(&self) -> bool {
        matches!(self, Self::Certified)
    }
}

// ── Family specification ─────────────────────────────────────────────────

/// An immutable, validated test-supermartingale family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySpec {
    kind: FamilyKind,
    functional: Functional,
    null: Vec<f64>,
    psi: Option<PsiSpec>,
    variance: Option<VarianceProcess>,
    domain: ThetaDomain,
    data_range: DataRange,
    margin: f64,
    /// Smallest `1 + increment` over the scanned data range and Θ (bounded kinds).
    increment_floor: Option<f64>,
    gradient_bound: Option<f64>,
}

/// Builder for [`FamilySpec`].
#[derive(Debug, Clone)]
pub struct FamilyBuilder {
    kind: FamilyKind,
    functional: Functional,
    null: Vec<f64>,
    data_range: Option<DataRange>,
    psi: Option<PsiSpec>,
    variance: Option<VarianceProcess>,
    region: Option<RegionSpec>,
    u: Option<UCoordinate>,
    margin: f64,
}

impl FamilyBuilder {
    /// Replaces the null value; handy for building one family per grid point.
    pub fn null(mut self, null: Vec<f64>) -> Self {
        self.null = null;
        self
    }

    pub fn data_range(mut self, r: DataRange) -> Self {
        self.data_range = Some(r);
        self
    }

    pub fn psi(mut self, p: PsiSpec) -> Self {
        self.psi = Some(p);
        self
    }

    pub fn variance(mut self, v: VarianceProcess) -> Self {
        self.variance = Some(v);
        self
    }

    pub fn region(mut self, r: RegionSpec) -> Self {
        self.region = Some(r);
        self
    }

    pub fn fixed_u(mut self, u: f64) -> Self {
        self.u = Some(UCoordinate::Fixed { u });
        self
    }

    pub fn joint_u(mut self, lo: f64, hi: f64) -> Self {
        self.u = Some(UCoordinate::Free { lo, hi });
        self
    }

    pub fn margin(mut self, eps: f64) -> Self {
        self.margin = eps;
        self
    }

    pub fn build(self) -> Result<FamilySpec> {
        let f = self.functional;
        f.validate()?;
        f.check_param(&self.null)?;
        let range = self.data_range.unwrap_or_else(|| DataRange::unbounded(f.obs_dim()));
        check_dim(f.obs_dim(), range.dim())?;
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::Param(format!("margin must lie in (0, 1), got {}", self.margin)));
        }
        if self.kind.is_elicitable() && !f.has_score() {
            return Err(Error::UnsupportedScore(f.to_string()));
        }
        let mut spec = FamilySpec {
            kind: self.kind,
            functional: f,
            null: self.null.clone(),
            psi: None,
            variance: None,
            domain: ThetaDomain { region: Region::Ball { center: vec![0.0], radius: 0.0 }, u: None },
            data_range: range,
            margin: self.margin,
            increment_floor: None,
            gradient_bound: None,
        };
        match self.kind {
            FamilyKind::BoundedIdentifiable => spec.setup_bounded_ident(self.region)?,
            FamilyKind::BoundedElicitable => spec.setup_bounded_elic(self.region)?,
            FamilyKind::SubPsiIdentifiable | FamilyKind::SubPsiElicitable => {
                let psi = self.psi.ok_or_else(|| Error::Config(format!("{} family needs a psi spec", self.kind)))?;
                spec.setup_sub_psi(psi, self.variance.unwrap_or_default(), self.region, self.u)?;
            }
        }
        Ok(spec)
    }
}

impl FamilySpec {
    pub fn builder(kind: FamilyKind, functional: Functional, null: Vec<f64>) -> FamilyBuilder {
        FamilyBuilder {
            kind,
            functional,
            null,
            data_range: None,
            psi: None,
            variance: None,
            region: None,
            u: None,
            margin: DEFAULT_MARGIN,
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn functional(&self) -> &Functional {
        &self.functional
    }

    pub fn null(&self) -> &[f64] {
        &self.null
    }

    pub fn psi(&self) -> Option<&PsiSpec> {
        self.psi.as_ref()
    }

    pub fn variance(&self) -> Option<&VarianceProcess> {
        self.variance.as_ref()
    }

    pub fn domain(&self) -> &ThetaDomain {
        &self.domain
    }

    pub fn data_range(&self) -> &DataRange {
        &self.data_range
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Smallest `1 + increment` found by the construction scan (bounded kinds).
    pub fn increment_floor(&self) -> Option<f64> {
        self.increment_floor
    }

    /// Conservative bound on ‖∇_θ log-increment‖ over Θ and the data range,
    /// when one exists.
    pub fn gradient_bound(&self) -> Option<f64> {
        self.gradient_bound
    }

    /// Whether the increment is differentiable in θ everywhere (so Newton
    /// steps are meaningful).
    pub fn is_smooth(&self) -> bool {
        let joint = matches!(self.domain.u, Some(UCoordinate::Free { .. }));
        let smooth_psi = self.psi.as_ref().is_none_or(|p| p.quadratic_coefficient().is_some());
        !joint && smooth_psi && (!self.kind.is_elicitable() || self.functional.score_is_smooth())
    }

    /// For sub-ψ identifiable families with fixed u and quadratic ψ returns
    /// `(u, c)` with `ψ(w) = c w²`; the cumulative objective is then
    /// `u⟨η, M⟩ − V c u² ‖η‖²`.
    pub(crate) fn quadratic_linear(&self) -> Option<(f64, f64)> {
        if self.kind != FamilyKind::SubPsiIdentifiable {
            return None;
        }
        match (self.domain.u, self.psi.as_ref().and_then(PsiSpec::quadratic_coefficient)) {
            (Some(UCoordinate::Fixed { u }), Some(c)) => Some((u, c)),
            _ => None,
        }
    }

    /// Strong-concavity modulus (per unit variance step) of θ ↦ log-increment
    /// when available.
    pub fn strong_concavity(&self) -> Option<f64> {
        if !self.kind.is_sub_psi() {
            return None;
        }
        let c = self.psi.as_ref()?.quadratic_coefficient()?;
        match self.domain.u {
            Some(UCoordinate::Fixed { u }) => {
                let vmin = self.variance.as_ref().map_or(1.0, VarianceProcess::min_increment);
                let mu = 2.0 * c * u * u * vmin;
                (mu > 0.0).then_some(mu)
            }
            _ => None,
        }
    }

    /// Static concavity certificate for θ ↦ log L_t^θ.
    pub fn certify_concavity(&self) -> ConcavityCertificate {
        match (self.kind, self.domain.u) {
            (FamilyKind::BoundedIdentifiable, _) => ConcavityCertificate::Certified,
            (FamilyKind::BoundedElicitable, _) => ConcavityCertificate::Certified,
            (_, Some(UCoordinate::Free { .. })) => ConcavityCertificate::Uncertified {
                reason: format!(
                    "joint (parameter, u) parametrisation: the term u·{} is bilinear and not jointly concave",
                    if self.kind.is_elicitable() { "(score gap)" } else { "<eta, m>" }
                ),
            },
            _ => ConcavityCertificate::Certified,
        }
    }

    // ── construction helpers ──

    fn ident_at(&self, x: &[f64], out: &mut [f64]) -> bool {
        self.functional.ident_into(&self.null, x, out).is_ok()
    }

    fn scan_points(&self) -> Vec<Vec<f64>> {
        let bps = self.functional.ident_breakpoints(&self.null);
        self.data_range.scan_grid(SCAN_BUDGET, &bps)
    }

    fn setup_bounded_ident(&mut self, region: Option<RegionSpec>) -> Result<()> {
        let c = self.functional.ident_bound(&self.null, &self.data_range).ok_or_else(|| {
            Error::Domain(format!(
                "{} has no bounded identification function on the declared data range; \
                 declare a bounded range or use a sub-psi family",
                self.functional
            ))
        })?;
        let k = self.functional.param_dim();
        let origin = vec![0.0; k];
        let region = match region {
            Some(r) => r.resolve(&origin)?,
            None if c == 0.0 => Region::new_ball(origin, 0.0)?,
            None => Region::new_ball(origin, (1.0 - self.margin) / c)?,
        };
        check_dim(k, region.dim())?;
        let vertices = region.vertices();
        let mut m = vec![0.0; k];
        let mut floor = f64::INFINITY;
        let mut g = 0.0_f64;
        for x in self.scan_points() {
            if !self.ident_at(&x, &mut m) {
                continue;
            }
            let worst = match &region {
                Region::Ball { center, radius } => dot(center, &m) - radius * norm(&m),
                Region::Box { .. } => vertices.iter().map(|v| dot(v, &m)).fold(f64::INFINITY, f64::min),
            };
            let z = 1.0 + worst;
            floor = floor.min(z);
            if z > 0.0 {
                g = g.max(norm(&m) / z);
            }
        }
        if floor < self.margin - 1e-12 {
            return Err(Error::Domain(format!(
                "domain {region:?} leaves the admissible set: min 1 + <eta, m> = {floor:.3e} < margin {}",
                self.margin
            )));
        }
        self.domain = ThetaDomain { region, u: None };
        self.increment_floor = Some(floor);
        self.gradient_bound = Some(g);
        Ok(())
    }

    fn setup_bounded_elic(&mut self, region: Option<RegionSpec>) -> Result<()> {
        let k = self.functional.param_dim();
        let explicit = region.is_some();
        let mut region = match region {
            Some(r) => r.resolve(&self.null)?,
            None => self.default_elic_box()?,
        };
        check_dim(k, region.dim())?;
        if matches!(region, Region::Ball { .. }) && k > 1 {
            return Err(Error::Config(
                "bounded elicitable families need a box domain in more than one dimension".into(),
            ));
        }
        if let Region::Ball { center, radius } = &region {
            region = Region::new_box(vec![center[0] - radius], vec![center[0] + radius])?;
        }
        let xs = self.scan_points();
        let mut shrink = 0;
        loop {
            let floor = self.elic_floor(&region, &xs)?;
            if floor >= self.margin - 1e-12 {
                self.increment_floor = Some(floor);
                break;
            }
            if explicit || shrink >= 60 {
                return Err(Error::Domain(format!(
                    "score gap leaves the admissible set on {region:?}: min 1 + gap = {floor:.3e}; \
                     rescale the data or shrink the domain"
                )));
            }
            region = shrink_box(&region, &self.null, 0.75);
            shrink += 1;
        }
        self.domain = ThetaDomain { region, u: None };
        self.gradient_bound = Some(self.elic_gradient_bound(&xs)?);
        Ok(())
    }

    fn default_elic_box(&self) -> Result<Region> {
        let k = self.functional.param_dim();
        match self.functional {
            Functional::Mean | Functional::Quantile { .. }
                if self.data_range.lo()[0].is_finite() && self.data_range.hi()[0].is_finite() =>
            {
                let (lo, hi) = (self.data_range.lo()[0], self.data_range.hi()[0]);
                Region::new_box(vec![lo.min(self.null[0])], vec![hi.max(self.null[0])])
            }
            _ => Region::new_box(
                self.null.iter().map(|v| v - 1.0).collect(),
                self.null.iter().map(|v| v + 1.0).collect(),
            )
            .inspect(|r| {
                debug_assert_eq!(r.dim(), k);
            }),
        }
    }

    /// min over scanned x and box vertices of 1 + s(λ₀,x) − s(λ,x); the gap
    /// is concave in λ so its minimum over a box sits at a vertex.
    fn elic_floor(&self, region: &Region, xs: &[Vec<f64>]) -> Result<f64> {
        let vertices = region.vertices();
        let mut floor = f64::INFINITY;
        for x in xs {
            let s0 = self.functional.score_raw(&self.null, x)?;
            for v in &vertices {
                floor = floor.min(1.0 + (s0 - self.functional.score_raw(v, x)?));
            }
        }
        Ok(floor)
    }

    fn elic_gradient_bound(&self, xs: &[Vec<f64>]) -> Result<f64> {
        let k = self.functional.param_dim();
        let n = if k == 1 { 101 } else { 11 };
        let lambdas = self.domain.region.grid(n);
        let mut grad = vec![0.0; k];
        let mut g = 0.0_f64;
        for x in xs {
            let s0 = self.functional.score_raw(&self.null, x)?;
            for l in &lambdas {
                let z = 1.0 + (s0 - self.functional.score_raw(l, x)?);
                self.functional.score_grad(l, x, &mut grad)?;
                if z > 0.0 {
                    g = g.max(norm(&grad) / z);
                }
            }
        }
        Ok(g)
    }

    fn setup_sub_psi(
        &mut self,
        psi: PsiSpec,
        variance: VarianceProcess,
        region: Option<RegionSpec>,
        u: Option<UCoordinate>,
    ) -> Result<()> {
        let k = self.functional.param_dim();
        let origin = if self.kind.is_elicitable() { self.null.clone() } else { vec![0.0; k] };
        let region = match region {
            Some(r) => r.resolve(&origin)?,
            None => Region::new_ball(origin.clone(), 1.0)?,
        };
        check_dim(k, region.dim())?;
        let u_cap = (psi.u_max() / 2.0).min(1.0);
        let u = u.unwrap_or(UCoordinate::Fixed { u: u_cap });
        let u_hi = match u {
            UCoordinate::Fixed { u } => {
                if !(u >= 0.0 && u < psi.u_max()) {
                    return Err(Error::Domain(format!("u = {u} outside [0, {})", psi.u_max())));
                }
                u
            }
            UCoordinate::Free { lo, hi } => {
                if !(lo >= 0.0 && lo <= hi && hi < psi.u_max()) {
                    return Err(Error::Domain(format!("u interval [{lo}, {hi}] outside [0, {})", psi.u_max())));
                }
                hi
            }
        };
        let reach = region.max_distance_from(&origin);
        if u_hi * reach >= psi.u_max() {
            return Err(Error::Domain(format!(
                "bet size u * |theta| up to {} reaches u_max = {}",
                u_hi * reach,
                psi.u_max()
            )));
        }
        // gradient bound: u C + v_max u psi'(u R) (plus the u-direction when free)
        let vmax = variance.max_increment();
        let slope_bound = if self.kind.is_elicitable() {
            self.score_gradient_sup(&region)
        } else {
            self.functional.ident_bound(&self.null, &self.data_range)
        };
        self.gradient_bound = slope_bound.map(|c| {
            let tail = vmax * psi.deriv(u_hi * reach);
            let g_base = u_hi * c + u_hi * tail;
            match u {
                UCoordinate::Free { .. } => g_base.hypot(reach * c + reach * tail),
                UCoordinate::Fixed { .. } => g_base,
            }
        });
        self.domain = ThetaDomain { region, u: Some(u) };
        self.psi = Some(psi);
        self.variance = Some(variance);
        Ok(())
    }

    /// sup ‖∇_λ s(λ, x)‖ over the data range and the bounding box of `region`.
    fn score_gradient_sup(&self, region: &Region) -> Option<f64> {
        let (rlo, rhi) = region.bounds();
        match self.functional {
            Functional::Quantile { alpha } => Some(alpha.max(1.0 - alpha)),
            _ if !self.data_range.is_bounded() => None,
            Functional::Mean => {
                let (lo, hi) = (self.data_range.lo()[0], self.data_range.hi()[0]);
                Some((rhi[0] - lo).abs().max((hi - rlo[0]).abs()))
            }
            Functional::Regression { k } => {
                let (lo, hi) = (self.data_range.lo(), self.data_range.hi());
                let xn: f64 = (0..k).map(|i| lo[i].abs().max(hi[i].abs()).powi(2)).sum::<f64>().sqrt();
                let yn = lo[k].abs().max(hi[k].abs());
                let ln: f64 = rlo.iter().zip(&rhi).map(|(a, b)| a.abs().max(b.abs()).powi(2)).sum::<f64>().sqrt();
                Some((ln * xn + yn) * xn)
            }
            _ => None,
        }
    }

    // ── evaluation ──

    /// Pre-processes an observation for step `t` (1-based). Returns the
    /// payoff and whether the row was degenerate (regression with zero
    /// covariates, which contributes `m = 0`).
    pub fn payoff(&self, x: &[f64], t: usize) -> Result<(Payoff, bool)> {
        self.data_range.check(x, t)?;
        let v = match &self.variance {
            Some(vp) => vp.increment(t)?,
            None => 0.0,
        };
        let mut degenerate = false;
        let term = if self.kind.is_elicitable() {
            PayoffTerm::Score { s0: self.functional.score_raw(&self.null, x)?, x: x.to_vec() }
        } else {
            let mut m = vec![0.0; self.functional.param_dim()];
            match self.functional.ident_into(&self.null, x, &mut m) {
                Ok(()) => {}
                Err(Error::DegenerateInput(_)) => {
                    degenerate = true;
                    m.iter_mut().for_each(|v| *v = 0.0);
                }
                Err(e) => return Err(e),
            }
            PayoffTerm::Linear(m)
        };
        Ok((Payoff { t, v, term }, degenerate))
    }

    /// Log increment of a pre-processed payoff at θ.
    pub fn eval(&self, p: &Payoff, theta: &[f64]) -> Result<f64> {
        self.eval_impl(p, theta, None, None)
    }

    /// Log increment plus its gradient (added into `grad`) and, when
    /// requested and available, its Hessian (added into `hess`, row-major).
    pub fn eval_derivs(&self, p: &Payoff, theta: &[f64], grad: &mut [f64], hess: Option<&mut [f64]>) -> Result<f64> {
        self.eval_impl(p, theta, Some(grad), hess)
    }

    fn eval_impl(&self, p: &Payoff, theta: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> Result<f64> {
        let dim = self.domain.dim();
        let (base, u) = self.domain.split(theta);
        let k = base.len();
        let nonpositive = |z: f64| Error::NonpositiveIncrement { value: z, step: p.t };
        match (&p.term, self.kind) {
            (PayoffTerm::Linear(m), FamilyKind::BoundedIdentifiable) => {
                let z = 1.0 + dot(base, m);
                if !(z > 0.0) {
                    return Err(nonpositive(z));
                }
                if let Some(g) = grad {
                    for (gi, mi) in g.iter_mut().zip(m) {
                        *gi += mi / z;
                    }
                }
                if let Some(h) = hess {
                    let z2 = z * z;
                    for i in 0..k {
                        for j in 0..k {
                            h[i * dim + j] -= m[i] * m[j] / z2;
                        }
                    }
                }
                Ok(z.ln())
            }
            (PayoffTerm::Score { s0, x }, FamilyKind::BoundedElicitable) => {
                let s = self.functional.score_raw(base, x)?;
                let z = 1.0 + (s0 - s);
                if !(z > 0.0) {
                    return Err(nonpositive(z));
                }
                if grad.is_some() || hess.is_some() {
                    let mut gs = vec![0.0; k];
                    self.functional.score_grad(base, x, &mut gs)?;
                    if let Some(g) = grad {
                        for (gi, si) in g.iter_mut().zip(&gs) {
                            *gi -= si / z;
                        }
                    }
                    if let Some(h) = hess {
                        let mut hs = vec![0.0; k * k];
                        self.functional.score_hess(x, &mut hs)?;
                        for i in 0..k {
                            for j in 0..k {
                                h[i * dim + j] -= hs[i * k + j] / z + gs[i] * gs[j] / (z * z);
                            }
                        }
                    }
                }
                Ok(z.ln())
            }
            (PayoffTerm::Linear(m), FamilyKind::SubPsiIdentifiable) => {
                let lin = dot(base, m);
                let (gap_grad, gap) = (m.clone(), lin);
                self.sub_psi_eval(p.v, base, &[0.0; 0], u, gap, &gap_grad, None, grad, hess)
            }
            (PayoffTerm::Score { s0, x }, FamilyKind::SubPsiElicitable) => {
                let s = self.functional.score_raw(base, x)?;
                let mut gs = vec![0.0; k];
                self.functional.score_grad(base, x, &mut gs)?;
                gs.iter_mut().for_each(|v| *v = -*v);
                let hs = if hess.is_some() {
                    let mut hs = vec![0.0; k * k];
                    self.functional.score_hess(x, &mut hs)?;
                    Some(hs)
                } else {
                    None
                };
                self.sub_psi_eval(p.v, base, &self.null, u, s0 - s, &gs, hs.as_deref(), grad, hess)
            }
            _ => Err(Error::Config(format!("payoff does not match family kind {}", self.kind))),
        }
    }

    /// Shared sub-ψ evaluation: `u·gap(base) − v ψ(u ‖base − origin‖)` where
    /// `origin` is empty for the identifiable kind (origin 0). `gap_grad` is
    /// ∇gap and `score_hess` the Hessian of the score (−∇²gap).
    #[allow(clippy::too_many_arguments)]
    fn sub_psi_eval(
        &self,
        v: f64,
        base: &[f64],
        origin: &[f64],
        u: f64,
        gap: f64,
        gap_grad: &[f64],
        score_hess: Option<&[f64]>,
        grad: Option<&mut [f64]>,
        hess: Option<&mut [f64]>,
    ) -> Result<f64> {
        let psi = self.psi.as_ref().expect("sub-psi family carries psi");
        let k = base.len();
        let dim = self.domain.dim();
        let d: Vec<f64> =
            if origin.is_empty() { base.to_vec() } else { base.iter().zip(origin).map(|(a, b)| a - b).collect() };
        let r = norm(&d);
        let w = u * r;
        if w >= psi.u_max() {
            return Err(Error::Range { u: w, u_max: psi.u_max() });
        }
        let value = u * gap - v * psi.eval_unchecked(w);
        let quad = psi.quadratic_coefficient();
        let free_u = matches!(self.domain.u, Some(UCoordinate::Free { .. }));
        if let Some(g) = grad {
            // coefficient multiplying d in ∇_base of v ψ(u‖d‖)
            let coef = match quad {
                Some(c) => 2.0 * c * u * u,
                None if r > 0.0 => psi.deriv(w) * u / r,
                None => 0.0,
            };
            for i in 0..k {
                g[i] += u * gap_grad[i] - v * coef * d[i];
            }
            if free_u {
                g[k] += gap - v * psi.deriv(w) * r;
            }
        }
        if let Some(h) = hess {
            if let Some(hs) = score_hess {
                for i in 0..k {
                    for j in 0..k {
                        h[i * dim + j] -= u * hs[i * k + j];
                    }
                }
            }
            match quad {
                Some(c) => {
                    for i in 0..k {
                        h[i * dim + i] -= v * 2.0 * c * u * u;
                    }
                }
                None if r > 0.0 => {
                    let a = psi.second_deriv(w) * u * u;
                    let b = psi.deriv(w) * u / r;
                    for i in 0..k {
                        for j in 0..k {
                            let outer = d[i] * d[j] / (r * r);
                            let id = if i == j { 1.0 } else { 0.0 };
                            h[i * dim + j] -= v * (a * outer + b * (id - outer));
                        }
                    }
                }
                None => {
                    let a = psi.second_deriv(0.0) * u * u;
                    for i in 0..k {
                        h[i * dim + i] -= v * a;
                    }
                }
            }
        }
        Ok(value)
    }

    /// `log(L_t^θ / L_{t−1}^θ)` for observation `x` at the 1-based step `t`.
    pub fn log_increment(&self, theta: &[f64], x: &[f64], t: usize) -> Result<f64> {
        self.check_theta(theta)?;
        let (p, _) = self.payoff(x, t)?;
        self.eval(&p, theta)
    }

    /// Cumulative log-wealth `log L_t^θ` for `t = 1..=n`.
    pub fn log_wealth_path(&self, theta: &[f64], xs: &[Observation]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let mut acc = 0.0;
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let (p, _) = self.payoff(x, i + 1)?;
                acc += self.eval(&p, theta)?;
                Ok(acc)
            })
            .collect()
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.domain.dim(), theta.len())?;
        if !self.domain.contains(theta, 1e-9) {
            return Err(Error::Domain(format!("theta {theta:?} outside the family domain")));
        }
        Ok(())
    }
}

fn shrink_box(region: &Region, toward: &[f64], factor: f64) -> Region {
    match region {
        Region::Box { lo, hi } => Region::Box {
            lo: lo.iter().zip(toward).map(|(l, c)| c + (l - c) * factor).collect(),
            hi: hi.iter().zip(toward).map(|(h, c)| c + (h - c) * factor).collect(),
        },
        Region::Ball { center, radius } => Region::Ball { center: center.clone(), radius: radius * factor },
    }
}

/// Pathwise comparison between an elicitable family at λ and the
/// identifiable family at its linearisation η = o·(λ₀ − λ).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    pub steps: usize,
    /// max_t (log L_t^{elic,λ} − log L_t^{ident,η}); ≤ 0 when domination holds.
    pub max_violation: f64,
    /// Number of steps where the violation exceeds 1e-9.
    pub violations: usize,
}

/// Checks `log L_t^{elic,λ} ≤ log L_t^{ident,η} + 1e-9` along a path, where η
/// is the subgradient linearisation of the score gap at λ₀.
pub fn domination_check(
    fam_e: &FamilySpec,
    fam_i: &FamilySpec,
    lambda: &[f64],
    xs: &[Observation],
) -> Result<DominationReport> {
    if fam_e.kind != FamilyKind::BoundedElicitable || fam_i.kind != FamilyKind::BoundedIdentifiable {
        return Err(Error::Config(
            "domination check needs a bounded elicitable and a bounded identifiable family".into(),
        ));
    }
    if fam_e.functional != fam_i.functional || fam_e.null != fam_i.null {
        return Err(Error::Config("families must share functional and null value".into()));
    }
    let o = fam_e
        .functional
        .ident_orientation()
        .ok_or_else(|| Error::Config(format!("{} has no exact score/identification link", fam_e.functional)))?;
    fam_e.check_theta(lambda)?;
    let eta: Vec<f64> = fam_e.null.iter().zip(lambda).map(|(l0, l)| o * (l0 - l)).collect();
    let (mut ce, mut ci) = (0.0, 0.0);
    let mut report = DominationReport { steps: xs.len(), max_violation: f64::NEG_INFINITY, violations: 0 };
    for (i, x) in xs.iter().enumerate() {
        let (pe, _) = fam_e.payoff(x, i + 1)?;
        let (pi, _) = fam_i.payoff(x, i + 1)?;
        ce += fam_e.eval(&pe, lambda)?;
        ci += fam_i.eval(&pi, &eta)?;
        let viol = ce - ci;
        report.max_violation = report.max_violation.max(viol);
        if viol > 1e-9 {
            report.violations += 1;
        }
    }
    if xs.is_empty() {
        report.max_violation = 0.0;
    }
    Ok(report)
}

// ── Cumulative objectives ────────────────────────────────────────────────

/// Bit pattern identifying a payoff up to its step index.
fn payoff_key(p: &Payoff) -> Vec<u64> {
    let mut key = vec![p.v.to_bits()];
    match &p.term {
        PayoffTerm::Linear(m) => key.extend(m.iter().map(|v| v.to_bits())),
        PayoffTerm::Score { s0, x } => {
            key.push(u64::MAX);
            key.push(s0.to_bits());
            key.extend(x.iter().map(|v| v.to_bits()));
        }
    }
    key
}

/// Weighted sum of payoffs, `θ ↦ Σ_i w_i log-increment_i(θ)`.
///
/// For sub-ψ identifiable families the increment is linear in `(m, v)`, so the
/// sum collapses to a single aggregated payoff and needs O(1) memory. Other
/// kinds keep one weighted term per distinct payoff, so discrete data costs
/// O(#atoms) per evaluation however long the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSum {
    aggregate: Option<Payoff>,
    terms: Vec<(f64, Payoff)>,
    index: HashMap<Vec<u64>, usize>,
    total_weight: f64,
    count: usize,
}

impl PayoffSum {
    pub fn new(fam: &FamilySpec) -> Self {
        let aggregate = (fam.kind == FamilyKind::SubPsiIdentifiable).then(|| Payoff {
            t: 0,
            v: 0.0,
            term: PayoffTerm::Linear(vec![0.0; fam.functional.param_dim()]),
        });
        Self { aggregate, terms: Vec::new(), index: HashMap::new(), total_weight: 0.0, count: 0 }
    }

    pub fn push(&mut self, p: Payoff, weight: f64) {
        self.total_weight += weight;
        self.count += 1;
        match (&mut self.aggregate, &p.term) {
            (Some(agg), PayoffTerm::Linear(m)) => {
                agg.t = p.t;
                agg.v += weight * p.v;
                if let PayoffTerm::Linear(acc) = &mut agg.term {
                    for (a, b) in acc.iter_mut().zip(m) {
                        *a += weight * b;
                    }
                }
            }
            _ => {
                let key = payoff_key(&p);
                match self.index.get(&key) {
                    Some(&i) => self.terms[i].0 += weight,
                    None => {
                        self.index.insert(key, self.terms.len());
                        self.terms.push((weight, p));
                    }
                }
            }
        }
    }

    /// Number of distinct stored terms (excluding the aggregate).
    pub fn distinct_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Aggregated `(Σ w m, Σ w v)` for sub-ψ identifiable families.
    pub(crate) fn aggregate(&self) -> Option<(&[f64], f64)> {
        match &self.aggregate {
            Some(Payoff { v, term: PayoffTerm::Linear(m), .. }) => Some((m, *v)),
            _ => None,
        }
    }

    pub fn value(&self, fam: &FamilySpec, theta: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        if let Some(a) = &self.aggregate {
            acc += fam.eval(a, theta)?;
        }
        for (w, p) in &self.terms {
            acc += w * fam.eval(p, theta)?;
        }
        Ok(acc)
    }

    pub fn derivs(
        &self,
        fam: &FamilySpec,
        theta: &[f64],
        grad: &mut [f64],
        mut hess: Option<&mut [f64]>,
    ) -> Result<f64> {
        let dim = grad.len();
        let mut acc = 0.0;
        if let Some(a) = &self.aggregate {
            acc += fam.eval_derivs(a, theta, grad, hess.as_deref_mut())?;
        }
        if self.terms.is_empty() {
            return Ok(acc);
        }
        let mut g = vec![0.0; dim];
        let mut h = hess.as_ref().map(|_| vec![0.0; dim * dim]);
        for (w, p) in &self.terms {
            g.iter_mut().for_each(|v| *v = 0.0);
            if let Some(h) = h.as_mut() {
                h.iter_mut().for_each(|v| *v = 0.0);
            }
            acc += w * fam.eval_derivs(p, theta, &mut g, h.as_deref_mut())?;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += w * b;
            }
            if let (Some(dst), Some(src)) = (hess.as_deref_mut(), h.as_ref()) {
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += w * b;
                }
            }
        }
        Ok(acc)
    }
}
