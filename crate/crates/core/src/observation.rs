//! Observations and declared data ranges.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single observation: a finite real vector.
///
/// Scalar functionals use one coordinate. Regression observations are packed
/// as `[x_1, ..., x_k, y]` (covariates first, response last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Param("observation must have at least one coordinate".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Param(format!("observation coordinate {i} is not finite ({})", values[i])));
        }
        Ok(Self(values))
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Observation {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Observation {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Observation {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Observation> for Vec<f64> {
    fn from(o: Observation) -> Self {
        o.0
    }
}

/// Builds a stream of scalar observations, failing on the first non-finite value.
pub fn scalar_stream(xs: &[f64]) -> Result<Vec<Observation>> {
    xs.iter().map(|&x| Observation::scalar(x)).collect()
}

/// Per-coordinate box `[lo_i, hi_i]` that observations are declared to live in.
/// Infinite endpoints mean the coordinate is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRange {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DataRange {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Param("data range bounds must be non-empty and of equal length".into()));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if a.is_nan() || b.is_nan() || a > b {
                return Err(Error::Param(format!("invalid data range interval [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn unbounded(dim: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; dim], hi: vec![f64::INFINITY; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    /// Checks an observation against the range; `step` is only used for the
    /// error message.
    pub fn check(&self, x: &[f64], step: usize) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        for (i, &v) in x.iter().enumerate() {
            if v < self.lo[i] || v > self.hi[i] {
                return Err(Error::DataRange { step, coordinate: i, value: v, lo: self.lo[i], hi: self.hi[i] });
            }
        }
        Ok(())
    }

    /// Grid of scan points for coordinate `i`: `n` equispaced points plus the
    /// supplied breakpoints (and their immediate neighbours) that fall inside
    /// the range. Infinite endpoints are replaced by a wide finite window
    /// around the breakpoints.
    pub(crate) fn scan_axis(&self, i: usize, n: usize, breakpoints: &[f64]) -> Vec<f64> {
        const WINDOW: f64 = 1.0e3;
        let centre = breakpoints.first().copied().unwrap_or(0.0);
        let lo = if self.lo[i].is_finite() { self.lo[i] } else { centre - WINDOW };
        let hi = if self.hi[i].is_finite() { self.hi[i] } else { centre + WINDOW };
        let mut pts: Vec<f64> = if n <= 1 || hi == lo {
            vec![lo, hi]
        } else {
            (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
        };
        for &b in breakpoints {
            let eps = 1e-9 * (1.0 + b.abs());
            for c in [b - eps, b, b + eps] {
                if c >= lo && c <= hi {
                    pts.push(c);
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Cartesian scan grid over all coordinates with roughly `budget` points.
    pub(crate) fn scan_grid(&self, budget: usize, breakpoints: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        let per_axis = ((budget as f64).powf(1.0 / d as f64).floor() as usize).max(3);
        let axes: Vec<Vec<f64>> = (0..d).map(|i| self.scan_axis(i, per_axis, breakpoints)).collect();
        cartesian(&axes)
    }
}

impl fmt::Display for DataRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.lo.iter().zip(&self.hi).map(|(l, h)| format!("{l}:{h}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for DataRange {
    type Err = Error;

    /// `lo:hi[,lo:hi...]`, one pair per coordinate; `inf` and `-inf` allowed.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("data range `{s}` is not lo:hi[,lo:hi...]"));
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for part in s.split(',') {
            let (l, h) = part.split_once(':').ok_or_else(bad)?;
            lo.push(l.trim().parse::<f64>().map_err(|_| bad())?);
            hi.push(h.trim().parse::<f64>().map_err(|_| bad())?);
        }
        Self::new(lo, hi)
    }
}

/// Cartesian product of axis grids, first axis varying slowest.
pub(crate) fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Observation::new(vec![1.0, f64::NAN]).is_err());
        assert!(Observation::scalar(f64::INFINITY).is_err());
        assert!(Observation::new(vec![]).is_err());
    }

    #[test]
    fn range_check_reports_coordinate() {
        let r = DataRange::interval(0.0, 1.0).unwrap();
        assert!(r.check(&[0.5], 1).is_ok());
        match r.check(&[1.5], 7) {
            Err(Error::DataRange { step, coordinate, .. }) => {
                assert_eq!((step, coordinate), (7, 0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scan_axis_contains_breakpoints_and_ends() {
        let r = DataRange::interval(0.0, 1.0).unwrap();
        let g = r.scan_axis(0, 11, &[0.33]);
        assert!(g.contains(&0.0) && g.contains(&1.0) && g.contains(&0.33));
    }

    #[test]
    fn cartesian_product_size() {
        let g = cartesian(&[vec![0.0, 1.0], vec![0.0, 1.0, 2.0]]);
        assert_eq!(g.len(), 6);
        assert_eq!(g[1], vec![0.0, 1.0]);
    }
}
