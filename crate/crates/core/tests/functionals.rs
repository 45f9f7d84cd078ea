//! Functional catalog: worked examples, reference-law oracles and the
//! consistency / identification / subgradient / boundedness properties.

use anytime_core::{DataRange, DiscreteLaw, Error, Functional, ReferenceDistribution};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ── worked examples ─────────────────────────────────────────────────────

#[test]
fn score_examples() {
    assert_eq!(Functional::Mean.score(&[0.4], &[0.4]).unwrap(), 0.0);
    assert_eq!(Functional::quantile(0.5).unwrap().score(&[0.0], &[1.0]).unwrap(), 0.5);
    assert!(close(Functional::Mean.score(&[0.4], &[0.3]).unwrap(), 0.005, 1e-15));
}

#[test]
fn ident_examples() {
    let m = Functional::MeanSd.ident(&[0.4, 0.4], &[0.3]).unwrap();
    assert!(close(m[0], 0.1, 1e-15) && close(m[1], 0.23, 1e-15), "{m:?}");
    let m = Functional::var_cvar(0.05).unwrap().ident(&[0.2, 0.1], &[0.15]).unwrap();
    assert!(close(m[0], 0.95, 1e-15) && close(m[1], 0.145, 1e-15), "{m:?}");
    // lower-tail convention: 1{x <= λ} − α
    let q = Functional::quantile(0.05).unwrap();
    assert!(close(q.ident(&[0.1], &[0.2]).unwrap()[0], -0.05, 1e-15));
    assert!(close(q.ident(&[0.3], &[0.2]).unwrap()[0], 0.95, 1e-15));
}

#[test]
fn errors_for_unsupported_and_out_of_domain() {
    assert!(matches!(Functional::MeanSd.score(&[0.0, 1.0], &[0.0]), Err(Error::UnsupportedScore(_))));
    assert!(matches!(Functional::MeanSd.ident(&[0.0, -1.0], &[0.0]), Err(Error::Domain(_))));
    let vc = Functional::var_cvar(0.05).unwrap();
    // boundary λ_c = λ_v is admissible, above it is not
    assert!(vc.ident(&[0.1, 0.1], &[0.0]).is_ok());
    assert!(matches!(vc.ident(&[0.1, 0.2], &[0.0]), Err(Error::Domain(_))));
    assert!(matches!(Functional::regression(1).unwrap().ident(&[0.5], &[0.0, 1.0]), Err(Error::DegenerateInput(_))));
    assert!(Functional::quantile(1.0).is_err());
    assert!(Functional::var_cvar(0.0).is_err());
}

#[test]
fn ident_bound_examples() {
    let unit = DataRange::interval(0.0, 1.0).unwrap();
    assert_eq!(Functional::quantile(0.05).unwrap().ident_bound(&[0.3], &unit), Some(0.95));
    assert_eq!(Functional::quantile(0.5).unwrap().ident_bound(&[0.3], &unit), Some(0.5));
    assert_eq!(Functional::Mean.ident_bound(&[0.3], &DataRange::unbounded(1)), None);
    assert_eq!(Functional::regression(1).unwrap().ident_bound(&[0.3], &DataRange::unbounded(2)), None);
}

// ── reference-law oracles ───────────────────────────────────────────────

#[test]
fn mean_sd_of_beta_matches_closed_form_moments() {
    let (a, b) = (2.0_f64, 5.0_f64);
    let mean = a / (a + b);
    let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
    // frozen from the closed form
    assert!(close(mean, 0.285_714_285_714_285_7, 1e-15));
    assert!(close(sd, 0.159_719_141_249_984_97, 1e-15));
    let t = Functional::MeanSd.true_value(&ReferenceDistribution::Beta { a, b }).unwrap();
    assert!(close(t[0], mean, 1e-12) && close(t[1], sd, 1e-12), "{t:?}");
}

/// Beta(2,5) VaR/CVaR from the polynomial form of its density
/// f(x) = 30 x (1−x)^4: the CDF is a binomial tail sum and the partial first
/// moment integrates term by term.
fn beta25_var_cvar_oracle(alpha0: f64) -> (f64, f64) {
    let binom = |n: u64, k: u64| (1..=k).fold(1.0, |acc, i| acc * (n - k + i) as f64 / i as f64);
    let cdf = |x: f64| (2..=6u64).map(|j| binom(6, j) * x.powi(j as i32) * (1.0 - x).powi(6 - j as i32)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < alpha0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = 0.5 * (lo + hi);
    let partial: f64 =
        (0..=4u64).map(|k| 30.0 * binom(4, k) * (-1f64).powi(k as i32) * v.powi(k as i32 + 3) / (k as f64 + 3.0)).sum();
    (v, partial / alpha0)
}

#[test]
fn var_cvar_of_beta_matches_polynomial_oracle() {
    let (v, c) = beta25_var_cvar_oracle(0.05);
    // frozen oracle values
    assert!(close(v, 0.062_849_891_708_354_4, 1e-12));
    assert!(close(c, 0.040_972_527_118_602_14, 1e-12));
    let t = Functional::var_cvar(0.05).unwrap().true_value(&ReferenceDistribution::Beta { a: 2.0, b: 5.0 }).unwrap();
    assert!(close(t[0], v, 1e-9) && close(t[1], c, 1e-9), "{t:?} vs ({v}, {c})");
    // agrees with the rounded values (0.06, 0.04)
    assert!(close(t[0], 0.06, 0.005) && close(t[1], 0.04, 0.005));
}

#[test]
fn gaussian_reference_values() {
    let g = ReferenceDistribution::Gaussian { mean: 0.0, sd: 1.0 };
    assert_eq!(Functional::Mean.true_value(&g).unwrap(), vec![0.0]);
    let q = Functional::quantile(0.5).unwrap().true_value(&g).unwrap();
    assert!(q[0].abs() < 1e-12);
    // lower 5% tail of N(0,1): VaR = −1.6449, ES = −φ(1.6449)/0.05 = −2.0627
    let vc = Functional::var_cvar(0.05).unwrap().true_value(&g).unwrap();
    assert!(close(vc[0], -1.644_853_626_951_472_2, 1e-9), "{vc:?}");
    assert!(close(vc[1], -2.062_712_807_507_13, 1e-9), "{vc:?}");
    assert!(matches!(Functional::regression(1).unwrap().true_value(&g), Err(Error::UnsupportedPair { .. })));
}

// ── properties ──────────────────────────────────────────────────────────

/// Random discrete law on 2..=10 distinct atoms in [lo, hi].
fn scalar_law(lo: f64, hi: f64) -> impl Strategy<Value = DiscreteLaw<Vec<f64>>> {
    prop::collection::btree_set(0u32..1000, 2..=10)
        .prop_flat_map(move |atoms| {
            let n = atoms.len();
            (Just(atoms), prop::collection::vec(1u32..100, n))
        })
        .prop_map(move |(atoms, w)| {
            let total: u32 = w.iter().sum();
            let xs = atoms.into_iter().map(|a| vec![lo + (hi - lo) * a as f64 / 999.0]).collect();
            let ps = w.iter().map(|&v| v as f64 / total as f64).collect();
            DiscreteLaw::new(xs, ps).unwrap()
        })
}

/// Correctly specified one-covariate regression law: each covariate value
/// carries a symmetric pair of responses around β·x.
fn regression_law() -> impl Strategy<Value = (f64, DiscreteLaw<Vec<f64>>)> {
    (-2.0f64..2.0, prop::collection::vec((0.1f64..3.0, any::<bool>(), 0.0f64..2.0, 1u32..50), 1..=5)).prop_map(
        |(beta, rows)| {
            let mut atoms = Vec::new();
            let mut w = Vec::new();
            for (x, neg, e, p) in rows {
                let x = if neg { -x } else { x };
                atoms.push(vec![x, beta * x + e]);
                atoms.push(vec![x, beta * x - e]);
                w.push(p as f64);
                w.push(p as f64);
            }
            let total: f64 = w.iter().sum();
            (beta, DiscreteLaw::new(atoms, w.into_iter().map(|v| v / total).collect()).unwrap())
        },
    )
}

fn expected_score(f: &Functional, law: &DiscreteLaw<Vec<f64>>, lambda: f64) -> f64 {
    law.expect(|x| f.score(&[lambda], x).unwrap())
}

/// The grid minimisers of λ ↦ E s(λ, X) include a point within one grid step
/// of `truth`.
fn grid_argmin_contains(f: &Functional, law: &DiscreteLaw<Vec<f64>>, lo: f64, hi: f64, truth: f64) -> bool {
    let n = 4000;
    let h = (hi - lo) / n as f64;
    let vals: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let l = lo + h * i as f64;
            (l, expected_score(f, law, l))
        })
        .collect();
    let best = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    vals.iter().filter(|v| v.1 <= best + 1e-12 * (1.0 + best.abs())).any(|v| (v.0 - truth).abs() <= h * 1.000_001)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_is_strictly_consistent(law in scalar_law(-1.0, 2.0)) {
        let f = Functional::Mean;
        let t = f.true_value(&ReferenceDistribution::Discrete(law.clone())).unwrap()[0];
        prop_assert!(grid_argmin_contains(&f, &law, -1.0, 2.0, t));
    }

    #[test]
    fn quantile_is_strictly_consistent(law in scalar_law(0.0, 1.0), level in 0.05f64..0.95) {
        let f = Functional::quantile(level).unwrap();
        let t = f.true_value(&ReferenceDistribution::Discrete(law.clone())).unwrap()[0];
        prop_assert!(grid_argmin_contains(&f, &law, 0.0, 1.0, t));
    }

    #[test]
    fn regression_is_strictly_consistent((beta, law) in regression_law()) {
        let f = Functional::regression(1).unwrap();
        let t = f.true_value(&ReferenceDistribution::Discrete(law.clone())).unwrap()[0];
        prop_assert!((t - beta).abs() < 1e-9, "{} vs {}", t, beta);
        prop_assert!(grid_argmin_contains(&f, &law, -3.0, 3.0, t));
    }

    #[test]
    fn identification_vanishes_at_the_true_value(law in scalar_law(-1.0, 2.0)) {
        for f in [Functional::Mean, Functional::MeanSd] {
            let t = f.true_value(&ReferenceDistribution::Discrete(law.clone())).unwrap();
            for j in 0..f.param_dim() {
                let e = law.expect(|x| f.ident(&t, x).unwrap()[j]);
                prop_assert!(e.abs() <= 1e-9, "{} coordinate {}: {}", f, j, e);
            }
        }
    }

    #[test]
    fn regression_identification_vanishes(
        rows in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 2), -3.0f64..3.0, 1u32..20), 3..=10)
    ) {
        let f = Functional::regression(2).unwrap();
        let rows: Vec<_> = rows.into_iter().filter(|(x, _, _)| x[0].hypot(x[1]) > 1e-3).collect();
        prop_assume!(rows.len() >= 3);
        let total: f64 = rows.iter().map(|r| r.2 as f64).sum();
        let atoms = rows.iter().map(|(x, y, _)| vec![x[0], x[1], *y]).collect();
        let law = DiscreteLaw::new(atoms, rows.iter().map(|r| r.2 as f64 / total).collect()).unwrap();
        // skip nearly collinear designs where the normal equations are ill posed
        let t = match f.true_value(&ReferenceDistribution::Discrete(law.clone())) {
            Ok(t) if t.iter().all(|v| v.abs() < 1e6) => t,
            _ => return Ok(()),
        };
        for j in 0..2 {
            let e = law.expect(|x| f.ident(&t, x).unwrap()[j]);
            prop_assert!(e.abs() <= 1e-9 * (1.0 + t[0].abs() + t[1].abs()), "coordinate {}: {}", j, e);
        }
    }

    #[test]
    fn identification_is_the_score_gradient(
        lambda in prop::collection::vec(-2.0f64..2.0, 2),
        x in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let h = 1e-6;
        // mean: m = −∂s
        let fd = (Functional::Mean.score(&[lambda[0] + h], &x[..1]).unwrap()
            - Functional::Mean.score(&[lambda[0] - h], &x[..1]).unwrap()) / (2.0 * h);
        let m = Functional::Mean.ident(&lambda[..1], &x[..1]).unwrap()[0];
        prop_assert!((m + fd).abs() <= 1e-6 * (1.0 + m.abs()), "{} vs {}", m, -fd);
        // regression: m = ∇s / ‖x‖
        let f = Functional::regression(2).unwrap();
        let n = x[0].hypot(x[1]);
        prop_assume!(n > 1e-2);
        let m = f.ident(&lambda, &x).unwrap();
        for j in 0..2 {
            let mut up = lambda.clone();
            let mut dn = lambda.clone();
            up[j] += h;
            dn[j] -= h;
            let g = (f.score(&up, &x).unwrap() - f.score(&dn, &x).unwrap()) / (2.0 * h);
            prop_assert!((m[j] - g / n).abs() <= 1e-6 * (1.0 + m[j].abs()), "{} vs {}", m[j], g / n);
        }
    }

    #[test]
    fn ident_bound_is_sound(
        pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1000),
        level in 0.01f64..0.99,
    ) {
        let unit = DataRange::interval(0.0, 1.0).unwrap();
        let fs = [
            Functional::Mean,
            Functional::quantile(level).unwrap(),
            Functional::MeanSd,
            Functional::var_cvar(level).unwrap(),
        ];
        for (a, b, x) in pairs {
            for f in &fs {
                let l0 = match f {
                    Functional::Mean | Functional::Quantile { .. } => vec![a],
                    Functional::MeanSd => vec![a, b],
                    _ => vec![a.max(b), a.min(b)],
                };
                let bound = f.ident_bound(&l0, &unit).unwrap();
                let m = f.ident(&l0, &[x]).unwrap();
                let n = m.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(n <= bound + 1e-12, "{}: |m| = {} > {}", f, n, bound);
            }
        }
    }
}

/// At an atom the quantile identification does not average to zero: the
/// identifiability of quantiles needs a continuous CDF at the quantile.
#[test]
fn quantile_identification_fails_at_atoms() {
    let law = DiscreteLaw::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
    let f = Functional::quantile(0.3).unwrap();
    let t = f.true_value(&ReferenceDistribution::Discrete(law.clone())).unwrap();
    assert_eq!(t, vec![0.0]);
    let e = law.expect(|x| f.ident(&t, x).unwrap()[0]);
    assert!((e - 0.2).abs() < 1e-12, "E m = {e}");
}
