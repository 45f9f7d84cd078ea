//! Oracle fixtures for testing `anytime-core`: randomised discrete tree
//! models, the null-case catalogue and exhaustive node expectations.
//!
//! The `acceptance` test target in this crate runs the full acceptance
//! suite; the per-module integration tests in `anytime-core` reuse these
//! fixtures as a dev-dependency.

use anytime_core::discrete::for_each_node;
use anytime_core::rng::SplitMix64;
use anytime_core::tail_models::TreeModel;
use anytime_core::{
    Algorithm, DataRange, DiscreteLaw, FamilyKind, FamilySpec, Functional, PsiSpec, StrategyOptions, StrategyState,
    UCoordinate,
};
use rand::Rng;

/// Deterministic generator for the node reached by `history`.
pub fn node_rng(seed: u64, history: &[f64]) -> SplitMix64 {
    let mut h = seed ^ 0x243F_6A88_85A3_08D3;
    for v in history {
        h = (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3).rotate_left(17);
    }
    h ^= history.len() as u64;
    SplitMix64::new(h)
}

/// Random probability vector with entries bounded away from zero.
pub fn random_probs(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Increment model on `[-2.5, 2.5]` whose conditional mean is either in
/// `[-0.5, 0]` or in `[0.02, 0.5]`; each node is positive with probability
/// `positive_prob`.
pub fn drift_tree(seed: u64, depth: usize, atoms: usize, positive_prob: f64) -> TreeModel<'static> {
    TreeModel {
        depth,
        law: Box::new(move |hist: &[f64]| {
            let mut rng = node_rng(seed, hist);
            let xs: Vec<f64> = (0..atoms).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ps = random_probs(&mut rng, atoms);
            let mean: f64 = xs.iter().zip(&ps).map(|(x, p)| x * p).sum();
            let target = if rng.random::<f64>() < positive_prob {
                rng.random_range(0.02..0.5)
            } else {
                rng.random_range(-0.5..0.0)
            };
            let shifted = xs.iter().map(|x| x - mean + target).collect();
            DiscreteLaw::new(shifted, ps).unwrap()
        }),
    }
}

/// Bounds of the increments produced by [`drift_tree`].
pub const DRIFT_TREE_BOUNDS: (f64, f64) = (-2.5, 2.5);

/// Conditional laws of observations satisfying a null hypothesis at every
/// node.
#[derive(Debug, Clone, Copy)]
pub enum NullModel {
    /// `E X = l0`, `X ∈ [0, 1]`.
    Mean { l0: f64 },
    /// `P(X ≤ l0) = alpha`, `X ∈ [0, 1]`.
    Quantile { alpha: f64, l0: f64 },
    /// `E X = mu`, `sd X = sd`, `X ∈ [0, 1]` when `mu ± 2 sd` is.
    MeanSd { mu: f64, sd: f64 },
    /// `P(X ≤ v) = a0`, `E[X 1{X ≤ v}] = a0 c`, `X ∈ [0, 1]`.
    VarCvar { a0: f64, v: f64, c: f64 },
    /// Observation `(x, y)` with `y = beta x ± e`, `e ≤ 1` symmetric.
    Regression { beta: f64 },
}

/// Adds one atom at `lo` or `hi` so the law has mean `target` exactly.
fn pin_mean(xs: &mut Vec<f64>, ps: &mut Vec<f64>, target: f64, lo: f64, hi: f64) {
    let mean: f64 = xs.iter().zip(ps.iter()).map(|(x, p)| x * p).sum();
    let (anchor, w) =
        if mean > target { (lo, (mean - target) / (mean - lo)) } else { (hi, (target - mean) / (hi - mean)) };
    ps.iter_mut().for_each(|p| *p *= 1.0 - w);
    xs.push(anchor);
    ps.push(w);
}

impl NullModel {
    /// Random null law with about `atoms` atoms drawn from `rng`.
    pub fn law(&self, rng: &mut SplitMix64, atoms: usize) -> DiscreteLaw<Vec<f64>> {
        let atoms = atoms.max(2);
        match *self {
            NullModel::Mean { l0 } => {
                let mut xs: Vec<f64> = (0..atoms - 1).map(|_| rng.random_range(0.0..1.0)).collect();
                let mut ps = random_probs(rng, atoms - 1);
                pin_mean(&mut xs, &mut ps, l0, 0.0, 1.0);
                scalar(xs, ps)
            }
            NullModel::Quantile { alpha, l0 } => {
                let below = (atoms / 2).max(1);
                let mut xs: Vec<f64> = (0..below).map(|_| rng.random_range(0.0..=l0)).collect();
                xs.push(l0);
                let mut ps: Vec<f64> = random_probs(rng, below + 1).into_iter().map(|p| p * alpha).collect();
                let above = atoms.saturating_sub(below + 1).max(1);
                xs.extend((0..above).map(|_| rng.random_range(l0 + 1e-3..1.0)));
                ps.extend(random_probs(rng, above).into_iter().map(|p| p * (1.0 - alpha)));
                scalar(xs, ps)
            }
            NullModel::MeanSd { mu, sd } => {
                let pairs = (atoms / 2).max(1);
                let d: Vec<f64> = (0..pairs).map(|_| rng.random_range(0.5..1.0)).collect();
                let w = random_probs(rng, pairs);
                let rms = d.iter().zip(&w).map(|(d, w)| w * d * d).sum::<f64>().sqrt();
                let mut xs = Vec::new();
                let mut ps = Vec::new();
                for (d, w) in d.iter().zip(&w) {
                    let s = sd * d / rms;
                    xs.extend([mu - s, mu + s]);
                    ps.extend([0.5 * w, 0.5 * w]);
                }
                scalar(xs, ps)
            }
            NullModel::VarCvar { a0, v, c } => {
                let below = (atoms / 2).max(2);
                let mut xs: Vec<f64> = (0..below - 1).map(|_| rng.random_range(0.0..=v)).collect();
                let mut ps = random_probs(rng, below - 1);
                pin_mean(&mut xs, &mut ps, c, 0.0, v);
                ps.iter_mut().for_each(|p| *p *= a0);
                let above = atoms.saturating_sub(below).max(1);
                xs.extend((0..above).map(|_| rng.random_range(v + 1e-3..1.0)));
                ps.extend(random_probs(rng, above).into_iter().map(|p| p * (1.0 - a0)));
                scalar(xs, ps)
            }
            NullModel::Regression { beta } => {
                let pairs = (atoms / 2).max(1);
                let w = random_probs(rng, pairs);
                let mut xs = Vec::new();
                let mut ps = Vec::new();
                for w in w {
                    let mut x: f64 = rng.random_range(0.2..2.0);
                    if rng.random::<bool>() {
                        x = -x;
                    }
                    let e: f64 = rng.random_range(0.0..1.0);
                    xs.push(vec![x, beta * x + e]);
                    xs.push(vec![x, beta * x - e]);
                    ps.extend([0.5 * w, 0.5 * w]);
                }
                DiscreteLaw::new(xs, ps).unwrap()
            }
        }
    }

    /// History-dependent null law: a tree over observation vectors.
    pub fn tree(self, seed: u64, atoms: usize) -> impl Fn(&[Vec<f64>]) -> DiscreteLaw<Vec<f64>> {
        move |hist: &[Vec<f64>]| {
            let flat: Vec<f64> = hist.iter().flatten().copied().collect();
            let mut rng = node_rng(seed, &flat);
            self.law(&mut rng, atoms)
        }
    }
}

fn scalar(xs: Vec<f64>, ps: Vec<f64>) -> DiscreteLaw<Vec<f64>> {
    DiscreteLaw::new(xs.into_iter().map(|x| vec![x]).collect(), ps).unwrap()
}

// ── exhaustive supermartingale harness ─────────────────────────────────

/// Uniform draw from the bounding box of Θ, projected onto Θ.
pub fn random_theta(fam: &FamilySpec, rng: &mut SplitMix64) -> Vec<f64> {
    let d = fam.domain();
    let (lo, hi) = d.region.bounds();
    let mut th: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..=*b)).collect();
    if let Some(UCoordinate::Free { lo, hi }) = d.u {
        th.push(rng.random_range(lo..=hi));
    }
    d.project(&mut th);
    th
}

/// Smallest and largest conditional expectation `E[exp(step(history, X))]`
/// over all internal nodes of the tree, plus the node count.
pub fn node_expectations(
    depth: usize,
    law: &dyn Fn(&[Vec<f64>]) -> DiscreteLaw<Vec<f64>>,
    step: &dyn Fn(&[Vec<f64>], &[f64]) -> f64,
) -> (f64, f64, usize) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let nodes = for_each_node(depth, law, &mut |hist, l| {
        let e = l.expect(|x| step(hist, x).exp());
        lo = lo.min(e);
        hi = hi.max(e);
        Ok(())
    })
    .unwrap();
    (lo, hi, nodes)
}

/// One family paired with a null model it is a supermartingale under.
pub struct NullCase {
    pub name: &'static str,
    pub family: FamilySpec,
    pub model: NullModel,
}

/// Every (family kind, functional) pairing exercised by the oracle checks.
pub fn null_cases() -> Vec<NullCase> {
    use FamilyKind::*;
    let unit = || DataRange::interval(0.0, 1.0).unwrap();
    let hoeff = |a, b| PsiSpec::hoeffding(a, b).unwrap();
    let q = || Functional::quantile(0.3).unwrap();
    let build = |kind, f: Functional, null: Vec<f64>, psi: Option<PsiSpec>, range: DataRange| {
        let mut b = FamilySpec::builder(kind, f, null).data_range(range);
        if let Some(p) = psi {
            b = b.psi(p);
        }
        b.build().unwrap()
    };
    let reg_range = DataRange::new(vec![-2.0, -3.0], vec![2.0, 3.0]).unwrap();
    vec![
        NullCase {
            name: "bounded_identifiable/mean",
            family: build(BoundedIdentifiable, Functional::Mean, vec![0.4], None, unit()),
            model: NullModel::Mean { l0: 0.4 },
        },
        NullCase {
            name: "bounded_identifiable/quantile",
            family: build(BoundedIdentifiable, q(), vec![0.5], None, unit()),
            model: NullModel::Quantile { alpha: 0.3, l0: 0.5 },
        },
        NullCase {
            name: "bounded_identifiable/mean_sd",
            family: build(BoundedIdentifiable, Functional::MeanSd, vec![0.4, 0.2], None, unit()),
            model: NullModel::MeanSd { mu: 0.4, sd: 0.2 },
        },
        NullCase {
            name: "bounded_identifiable/var_cvar",
            family: build(BoundedIdentifiable, Functional::var_cvar(0.1).unwrap(), vec![0.3, 0.15], None, unit()),
            model: NullModel::VarCvar { a0: 0.1, v: 0.3, c: 0.15 },
        },
        NullCase {
            name: "bounded_elicitable/mean",
            family: build(BoundedElicitable, Functional::Mean, vec![0.4], None, unit()),
            model: NullModel::Mean { l0: 0.4 },
        },
        NullCase {
            name: "bounded_elicitable/quantile",
            family: build(BoundedElicitable, q(), vec![0.5], None, unit()),
            model: NullModel::Quantile { alpha: 0.3, l0: 0.5 },
        },
        NullCase {
            name: "subpsi_identifiable/mean",
            family: build(SubPsiIdentifiable, Functional::Mean, vec![0.4], Some(hoeff(0.0, 1.0)), unit()),
            model: NullModel::Mean { l0: 0.4 },
        },
        NullCase {
            name: "subpsi_identifiable/quantile",
            family: build(SubPsiIdentifiable, q(), vec![0.5], Some(hoeff(0.0, 1.0)), unit()),
            model: NullModel::Quantile { alpha: 0.3, l0: 0.5 },
        },
        NullCase {
            name: "subpsi_identifiable/regression",
            family: build(
                SubPsiIdentifiable,
                Functional::regression(1).unwrap(),
                vec![0.6],
                Some(hoeff(-1.0, 1.0)),
                reg_range,
            ),
            model: NullModel::Regression { beta: 0.6 },
        },
        NullCase {
            name: "subpsi_elicitable/mean",
            family: build(SubPsiElicitable, Functional::Mean, vec![0.4], Some(hoeff(0.0, 1.0)), unit()),
            model: NullModel::Mean { l0: 0.4 },
        },
        NullCase {
            name: "subpsi_elicitable/quantile",
            family: build(SubPsiElicitable, q(), vec![0.5], Some(hoeff(0.0, 1.0)), unit()),
            model: NullModel::Quantile { alpha: 0.3, l0: 0.5 },
        },
    ]
}

/// Bet chosen by `algo` after replaying `history` from scratch.
pub fn replayed_bet(fam: &FamilySpec, algo: Algorithm, history: &[Vec<f64>]) -> Vec<f64> {
    // any positive step scale keeps the bet predictable; families with an
    // unbounded gradient just get a fixed one
    let opts = StrategyOptions {
        gradient_bound: Some(fam.gradient_bound().unwrap_or(4.0)),
        track_regret: false,
        ..Default::default()
    };
    let mut s = StrategyState::new(algo, fam, &opts).unwrap();
    for x in history {
        s.step(fam, x).unwrap();
    }
    s.theta_next().to_vec()
}
