//! Deterministic inner solver for concave maximisation over Θ.
//!
//! One dimension: safeguarded Newton on the sign of the (sub)derivative,
//! which also handles the kinked quantile objectives. Higher dimensions:
//! projected Newton with Armijo backtracking, falling back to projected
//! gradient ascent with a backtracked step. Both start from the supplied
//! warm start (the previous iterate), so trajectories are reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{Region, ThetaDomain, UCoordinate};
use crate::numeric::{dot, norm};

/// A concave objective on Θ.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Value at θ; fills the ascent gradient and (if requested and
    /// [`Objective::smooth`]) the Hessian, both zero-initialised by the caller.
    fn eval(&self, theta: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> Result<f64>;

    /// Whether Hessians are meaningful.
    fn smooth(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Projected-gradient residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
}

fn value_grad(obj: &dyn Objective, theta: &[f64], g: &mut [f64]) -> Result<f64> {
    g.iter_mut().for_each(|v| *v = 0.0);
    obj.eval(theta, Some(g), None)
}

fn residual(domain: &ThetaDomain, theta: &[f64], g: &[f64]) -> f64 {
    let mut p: Vec<f64> = theta.iter().zip(g).map(|(a, b)| a + b).collect();
    domain.project(&mut p);
    let d: Vec<f64> = p.iter().zip(theta).map(|(a, b)| a - b).collect();
    norm(&d)
}

/// Interval of a one-dimensional domain.
fn interval(domain: &ThetaDomain) -> Option<(f64, f64)> {
    if domain.dim() != 1 {
        return None;
    }
    match (&domain.region, domain.u) {
        (Region::Box { lo, hi }, _) if lo.len() == 1 => Some((lo[0], hi[0])),
        (Region::Ball { center, radius }, _) if center.len() == 1 => Some((center[0] - radius, center[0] + radius)),
        (_, Some(UCoordinate::Free { lo, hi })) => Some((lo, hi)),
        _ => None,
    }
}

/// Maximises a concave objective over the domain starting from `start`.
pub fn maximize(obj: &dyn Objective, domain: &ThetaDomain, start: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    let mut x0 = start.to_vec();
    domain.project(&mut x0);
    if domain.is_singleton() {
        let value = obj.eval(&x0, None, None)?;
        return Ok(Solution { theta: x0, value, iterations: 0, residual: 0.0 });
    }
    match interval(domain) {
        Some((lo, hi)) => maximize_1d(obj, lo, hi, x0[0], cfg),
        None => maximize_nd(obj, domain, x0, cfg),
    }
}

fn maximize_1d(obj: &dyn Objective, lo: f64, hi: f64, x0: f64, cfg: &SolverConfig) -> Result<Solution> {
    let smooth = obj.smooth();
    let deriv = |x: f64| -> Result<(f64, f64, f64)> {
        let mut g = [0.0];
        let mut h = [0.0];
        let v = if smooth { obj.eval(&[x], Some(&mut g), Some(&mut h))? } else { obj.eval(&[x], Some(&mut g), None)? };
        Ok((v, g[0], h[0]))
    };
    let done =
        |x: f64, v: f64, iterations: usize, residual: f64| Solution { theta: vec![x], value: v, iterations, residual };
    let (v0, g0, _) = deriv(x0)?;
    if g0 == 0.0 {
        return Ok(done(x0, v0, 0, 0.0));
    }
    // bracket [a, b] with g(a) > 0 > g(b)
    let (mut a, mut b) = if g0 > 0.0 {
        let (vh, gh, _) = deriv(hi)?;
        if gh >= 0.0 {
            return Ok(done(hi, vh, 1, 0.0));
        }
        (x0, hi)
    } else {
        let (vl, gl, _) = deriv(lo)?;
        if gl <= 0.0 {
            return Ok(done(lo, vl, 1, 0.0));
        }
        (lo, x0)
    };
    let mut x = x0;
    let (mut gx, mut hx) = (g0, 0.0);
    if smooth {
        hx = deriv(x0)?.2;
    }
    let tol = cfg.tol;
    let mut last_width = b - a;
    for it in 1..=cfg.max_iter.min(500) {
        let mut cand = 0.5 * (a + b);
        if smooth && hx < 0.0 {
            let newton = x - gx / hx;
            if newton > a && newton < b {
                cand = newton;
            }
        }
        let (vc, gc, hc) = deriv(cand)?;
        if gc.abs() <= tol * 1e-2 || gc == 0.0 {
            return Ok(done(cand, vc, it, gc.abs()));
        }
        if gc > 0.0 {
            a = cand;
        } else {
            b = cand;
        }
        x = cand;
        gx = gc;
        hx = hc;
        let width = b - a;
        // force bisection if Newton is not shrinking the bracket fast enough
        if width > 0.5 * last_width {
            hx = 0.0;
        }
        last_width = width;
        if width <= tol * (1.0 + x.abs()) * 1e-2 || (smooth && gc.abs() <= tol) {
            // pick the better end of the final bracket
            let (va, vb) = (obj.eval(&[a], None, None)?, obj.eval(&[b], None, None)?);
            let best =
                [(x, vc), (a, va), (b, vb)]
                    .into_iter()
                    .fold((x, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
            return Ok(done(best.0, best.1, it, width.min(gc.abs())));
        }
    }
    Err(Error::SolverFailure { iterations: cfg.max_iter.min(500), residual: b - a })
}

fn maximize_nd(obj: &dyn Objective, domain: &ThetaDomain, mut x: Vec<f64>, cfg: &SolverConfig) -> Result<Solution> {
    let n = x.len();
    let smooth = obj.smooth();
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n * n];
    let mut step: f64 = 1.0;
    let mut f = value_grad(obj, &x, &mut g)?;
    let mut res = f64::INFINITY;
    let mut stalled = 0;
    for it in 0..cfg.max_iter {
        if smooth {
            g.iter_mut().for_each(|v| *v = 0.0);
            h.iter_mut().for_each(|v| *v = 0.0);
            f = obj.eval(&x, Some(&mut g), Some(&mut h))?;
        }
        res = residual(domain, &x, &g);
        if res <= cfg.tol {
            return Ok(Solution { theta: x, value: f, iterations: it, residual: res });
        }
        let mut accepted = false;
        if smooth {
            // Newton step constrained to Θ: maximise the local quadratic model
            // over the domain, then backtrack along the (feasible) segment.
            let y = model_argmax(domain, &x, &g, &h);
            let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            let slope = dot(&g, &d);
            if slope > 0.0 {
                let mut s = 1.0;
                for _ in 0..30 {
                    let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + s * b).collect();
                    if let Ok(fc) = obj.eval(&cand, None, None) {
                        if fc >= f + 1e-4 * s * slope {
                            x = cand;
                            accepted = true;
                            break;
                        }
                    }
                    s *= 0.5;
                }
            }
        }
        if !accepted {
            // projected gradient with backtracking on the quadratic upper model
            let mut s = (step * 2.0).min(1e12);
            let mut moved = false;
            for _ in 0..80 {
                let mut cand: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + s * b).collect();
                domain.project(&mut cand);
                let diff: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
                let dn = norm(&diff);
                if dn == 0.0 {
                    break;
                }
                if let Ok(fc) = obj.eval(&cand, None, None) {
                    if fc >= f + dot(&g, &diff) - dn * dn / (2.0 * s) && fc >= f {
                        x = cand;
                        step = s;
                        moved = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !moved {
                // no ascent possible at machine precision: stationary up to rounding
                let value = obj.eval(&x, None, None)?;
                return Ok(Solution { theta: x, value, iterations: it, residual: res });
            }
        }
        let f_prev = f;
        f = value_grad(obj, &x, &mut g)?;
        // Moves that no longer change the objective measurably mean the
        // iterate is stationary up to rounding.
        if f - f_prev <= 1e-14 * (1.0 + f.abs()) {
            stalled += 1;
            if stalled >= 5 {
                return Ok(Solution { theta: x, value: f, iterations: it + 1, residual: res });
            }
        } else {
            stalled = 0;
        }
    }
    Err(Error::SolverFailure { iterations: cfg.max_iter, residual: res })
}

/// Maximiser over Θ of `q(y) = ⟨g, y − x⟩ + ½ (y − x)ᵀ H (y − x)` by
/// accelerated projected gradient; `H` is negative semidefinite.
fn model_argmax(domain: &ThetaDomain, x: &[f64], g: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let lip = h.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let grad_at = |y: &[f64]| -> Vec<f64> {
        (0..n).map(|i| g[i] + (0..n).map(|j| h[i * n + j] * (y[j] - x[j])).sum::<f64>()).collect()
    };
    let mut y = x.to_vec();
    let mut z = x.to_vec();
    let mut tk = 1.0_f64;
    for _ in 0..2000 {
        let gz = grad_at(&z);
        let mut next: Vec<f64> = z.iter().zip(&gz).map(|(a, b)| a + b / lip).collect();
        domain.project(&mut next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let diff: Vec<f64> = next.iter().zip(&y).map(|(a, b)| a - b).collect();
        z = next.iter().zip(&diff).map(|(a, d)| a + (tk - 1.0) / t_next * d).collect();
        y = next;
        tk = t_next;
        if norm(&diff) <= 1e-13 * (1.0 + norm(&y)) {
            break;
        }
    }
    y
}

/// Global maximisation with grid refinement: in one or two dimensions the
/// best point of a coarse grid over Θ seeds an extra local solve, guarding
/// against non-concave (uncertified) objectives.
pub fn maximize_refined(
    obj: &dyn Objective,
    domain: &ThetaDomain,
    warm: &[f64],
    cfg: &SolverConfig,
) -> Result<Solution> {
    let mut best = maximize(obj, domain, warm, cfg)?;
    if domain.dim() <= 2 && !domain.is_singleton() {
        let n = if domain.dim() == 1 { 41 } else { 15 };
        let mut seed: Option<(Vec<f64>, f64)> = None;
        for p in domain.grid(n) {
            if let Ok(v) = obj.eval(&p, None, None) {
                if seed.as_ref().is_none_or(|s| v > s.1) {
                    seed = Some((p, v));
                }
            }
        }
        if let Some((p, v)) = seed {
            if v > best.value {
                let alt = maximize(obj, domain, &p, cfg)?;
                if alt.value > best.value {
                    best = alt;
                }
            }
        }
    }
    Ok(best)
}
