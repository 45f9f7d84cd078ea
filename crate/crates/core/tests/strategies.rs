//! Betting strategies: closed forms, hand-computed updates, grid oracles
//! for FTRL / FTLP / best fixed bet, regret bounds and predictability.

use anytime_core::families::PayoffSum;
use anytime_core::observation::scalar_stream;
use anytime_core::rng::SplitMix64;
use anytime_core::simlab::{generate, GeneratorKind};
use anytime_core::solver::SolverConfig;
use anytime_core::strategies::{
    ftl_update, ftlp_update, ftrl_sigma, mixture_step, ogd_update, MixtureWeights, ROOT_REGRET_CONSTANT,
};
use anytime_core::{
    Algorithm, DataRange, DiscreteLaw, FamilyKind, FamilySpec, Functional, Observation, PsiSpec, RegionSpec,
    StrategyOptions, StrategyState,
};
use proptest::prelude::*;
use rand::Rng;

fn unit() -> DataRange {
    DataRange::interval(0.0, 1.0).unwrap()
}

fn mean_ident(null: f64) -> FamilySpec {
    FamilySpec::builder(FamilyKind::BoundedIdentifiable, Functional::Mean, vec![null])
        .data_range(unit())
        .build()
        .unwrap()
}

fn gaussian_mean(null: f64, radius: f64, u: f64) -> FamilySpec {
    FamilySpec::builder(FamilyKind::SubPsiIdentifiable, Functional::Mean, vec![null])
        .psi(PsiSpec::gaussian(1.0).unwrap())
        .data_range(unit())
        .region(RegionSpec::Ball { radius, center: None })
        .fixed_u(u)
        .build()
        .unwrap()
}

fn state(algo: Algorithm, fam: &FamilySpec) -> StrategyState {
    StrategyState::new(algo, fam, &StrategyOptions::default()).unwrap()
}

fn beta_stream(seed: u64, n: usize) -> Vec<Observation> {
    generate(&GeneratorKind::IidBeta { a: 2.0, b: 5.0 }, seed, n).unwrap()
}

/// Dense grid maximiser of `f` on `[lo, hi]` followed by a local refinement
/// on the bracketing cell.
fn grid_argmax(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let mut best = (lo, f(lo));
    for i in 1..=n {
        let th = lo + h * i as f64;
        let v = f(th);
        if v > best.1 {
            best = (th, v);
        }
    }
    let (a, b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    for i in 0..=2_000 {
        let th = a + (b - a) * i as f64 / 2_000.0;
        let v = f(th);
        if v > best.1 {
            best = (th, v);
        }
    }
    best
}

// ── first steps and closed forms ────────────────────────────────────────

#[test]
fn first_bet_at_the_centre_earns_nothing() {
    let fam = mean_ident(0.4);
    for algo in Algorithm::ALL {
        let mut s = state(algo, &fam);
        assert_eq!(s.theta_next(), &[0.0]);
        assert_eq!(s.step(&fam, &[0.93]).unwrap(), 0.0, "{algo}");
    }
}

#[test]
fn ftl_sub_gaussian_mean_is_the_running_mean() {
    let fam = FamilySpec::builder(FamilyKind::SubPsiIdentifiable, Functional::Mean, vec![0.0])
        .psi(PsiSpec::gaussian(1.0).unwrap())
        .region(RegionSpec::Ball { radius: 5.0, center: None })
        .fixed_u(1.0)
        .build()
        .unwrap();
    let mut s = state(Algorithm::Ftl, &fam);
    s.step(&fam, &[1.0]).unwrap();
    s.step(&fam, &[1.0]).unwrap();
    assert_eq!(s.theta_next(), &[1.0]);
    let xs = [0.3, -1.2, 2.5, 0.7, 0.0, 1.1];
    let mut sum = 2.0;
    for (i, x) in xs.iter().enumerate() {
        s.step(&fam, &[*x]).unwrap();
        sum += x;
        assert!((s.theta_next()[0] - sum / (i + 3) as f64).abs() < 1e-15);
    }
}

#[test]
fn ftl_empty_history_returns_the_centre() {
    let fam = FamilySpec::builder(FamilyKind::BoundedElicitable, Functional::Mean, vec![0.4])
        .data_range(unit())
        .build()
        .unwrap();
    let th = ftl_update(&fam, &PayoffSum::new(&fam), &[0.9], &SolverConfig::default()).unwrap();
    assert_eq!(th, fam.domain().center());
}

/// Sub-ψ elicitable mean with Gaussian ψ: the cumulative objective in
/// d = λ − λ₀ is `u d S − t u d²/2 − t u² d²/2`, with vertex
/// `S / (t (1 + u))`. This family has no closed form in the library, so the
/// inner solver does the work.
#[test]
fn ftl_solver_finds_the_quadratic_vertex() {
    let (l0, u) = (0.4, 0.7);
    let fam = FamilySpec::builder(FamilyKind::SubPsiElicitable, Functional::Mean, vec![l0])
        .psi(PsiSpec::gaussian(1.0).unwrap())
        .data_range(unit())
        .fixed_u(u)
        .build()
        .unwrap();
    let mut s = state(Algorithm::Ftl, &fam);
    let mut sum = 0.0;
    for (t, x) in [0.9, 0.95, 0.7, 0.99, 0.8, 0.6].iter().enumerate() {
        s.step(&fam, &[*x]).unwrap();
        sum += x - l0;
        let vertex = l0 + sum / ((t + 1) as f64 * (1.0 + u));
        assert!((s.theta_next()[0] - vertex).abs() < 1e-8, "{} vs {vertex}", s.theta_next()[0]);
    }
}

// ── OGD ─────────────────────────────────────────────────────────────────

#[test]
fn ogd_projection_examples() {
    let boxed = FamilySpec::builder(FamilyKind::BoundedIdentifiable, Functional::Mean, vec![0.5])
        .data_range(unit())
        .region(RegionSpec::Box { lo: vec![-1.0], hi: vec![1.0] })
        .margin(0.5)
        .build()
        .unwrap();
    assert_eq!(ogd_update(&boxed, &[0.3], &[0.0], 4, 2.0, 1.0), vec![0.3]);
    // η_1 = D/G = 1, so θ − ην = 0.9 + 0.3 clips to 1
    assert_eq!(ogd_update(&boxed, &[0.9], &[-0.3], 1, 2.0, 2.0), vec![1.0]);
    let ball = FamilySpec::builder(FamilyKind::SubPsiIdentifiable, Functional::MeanSd, vec![0.4, 0.2])
        .psi(PsiSpec::gaussian(1.0).unwrap())
        .region(RegionSpec::Ball { radius: 1.0, center: None })
        .build()
        .unwrap();
    let th = ogd_update(&ball, &[0.0, 0.0], &[-3.0, -4.0], 1, 2.0, 2.0);
    assert!((th[0] - 0.6).abs() < 1e-15 && (th[1] - 0.8).abs() < 1e-15);
}

#[test]
fn ogd_two_steps_by_hand() {
    let fam = mean_ident(0.4);
    let d = fam.domain().diameter();
    let g = fam.gradient_bound().unwrap();
    let r = d / 2.0;
    let mut s = state(Algorithm::Ogd, &fam);
    // step 1: θ₁ = 0, ∇ log(1 + θ m) = m = 0.9 − 0.4
    s.step(&fam, &[0.9]).unwrap();
    let th2 = (0.0 + d / g * 0.5f64).clamp(-r, r);
    assert!((s.theta_next()[0] - th2).abs() < 1e-15);
    // step 2: gradient m / (1 + θ₂ m) with m = 0.1 − 0.4
    s.step(&fam, &[0.1]).unwrap();
    let grad = -0.3 / (1.0 + th2 * -0.3);
    let th3 = (th2 + d / (g * 2f64.sqrt()) * grad).clamp(-r, r);
    assert!((s.theta_next()[0] - th3).abs() < 1e-15, "{} vs {th3}", s.theta_next()[0]);
}

// ── FTRL ────────────────────────────────────────────────────────────────

#[test]
fn ftrl_sigma_telescopes() {
    let (g, d) = (3.0, 0.7);
    for t in [1usize, 2, 10, 1000] {
        let total: f64 = (0..t).map(|i| ftrl_sigma(i, g, d)).sum();
        assert!((total - g / d * (t as f64).sqrt()).abs() < 1e-9);
    }
}

#[test]
fn ftrl_on_flat_payoffs_stays_at_the_centre() {
    let fam = mean_ident(0.4);
    let mut s = state(Algorithm::FtrlProximal, &fam);
    for _ in 0..50 {
        s.step(&fam, &[0.4]).unwrap();
        assert_eq!(s.theta_next(), &[0.0]);
    }
}

/// Independent FTRL-proximal: after step t maximise
/// `Σ_{i≤t} log(1 + θ m_i) − Σ_{i≤t} σ_{i−1}/2 (θ − θ_i)²` on a grid.
#[test]
fn ftrl_trajectory_matches_grid_oracle() {
    let fam = mean_ident(0.3);
    let d = fam.domain().diameter();
    let g = fam.gradient_bound().unwrap();
    let r = d / 2.0;
    let xs = [0.9, 0.8, 0.05, 0.95, 0.7, 0.85, 0.6, 0.9, 0.2, 0.75, 0.8, 0.99];
    let mut s = state(Algorithm::FtrlProximal, &fam);
    let mut ms: Vec<f64> = Vec::new();
    let mut anchors: Vec<(f64, f64)> = Vec::new();
    let mut theta = 0.0;
    for (t, x) in xs.iter().enumerate() {
        s.step(&fam, &[*x]).unwrap();
        ms.push(x - 0.3);
        anchors.push((ftrl_sigma(t, g, d), theta));
        let obj = |th: f64| {
            ms.iter().map(|m| (1.0 + th * m).ln()).sum::<f64>()
                - anchors.iter().map(|(sg, a)| 0.5 * sg * (th - a).powi(2)).sum::<f64>()
        };
        theta = grid_argmax(-r, r, obj).0;
        assert!((s.theta_next()[0] - theta).abs() < 1e-4, "t={} {} vs {theta}", t + 1, s.theta_next()[0]);
    }
}

// ── FTLP ────────────────────────────────────────────────────────────────

#[test]
fn ftlp_with_the_empirical_measure_is_ftl() {
    let fam = FamilySpec::builder(FamilyKind::BoundedElicitable, Functional::quantile(0.3).unwrap(), vec![0.5])
        .data_range(unit())
        .build()
        .unwrap();
    let xs = [0.1, 0.2, 0.2, 0.9, 0.35, 0.6];
    let solver = SolverConfig::default();
    let mut sum = PayoffSum::new(&fam);
    for (i, x) in xs.iter().enumerate() {
        sum.push(fam.payoff(&[*x], i + 1).unwrap().0, 1.0);
    }
    let emp = DiscreteLaw::uniform(scalar_stream(&xs).unwrap()).unwrap();
    let a = ftl_update(&fam, &sum, &[0.5], &solver).unwrap();
    let b = ftlp_update(&fam, &emp, xs.len() + 1, &[0.5], &solver).unwrap();
    assert!((a[0] - b[0]).abs() < 1e-8, "{a:?} vs {b:?}");
    // point mass: one-sample FTL
    let mut one = PayoffSum::new(&fam);
    one.push(fam.payoff(&[0.9], 1).unwrap().0, 1.0);
    let point = DiscreteLaw::uniform(vec![Observation::scalar(0.9).unwrap()]).unwrap();
    let a = ftl_update(&fam, &one, &[0.5], &solver).unwrap();
    let b = ftlp_update(&fam, &point, 1, &[0.5], &solver).unwrap();
    assert!((a[0] - b[0]).abs() < 1e-8);
}

#[test]
fn ftlp_on_discretised_beta_finds_the_log_optimal_bet() {
    let fam = mean_ident(0.4);
    let n = 512;
    let xs: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
    let dens: Vec<f64> = xs.iter().map(|x| x * (1.0 - x).powi(4)).collect();
    let z: f64 = dens.iter().sum();
    let ps: Vec<f64> = dens.iter().map(|d| d / z).collect();
    let law = DiscreteLaw::new(scalar_stream(&xs).unwrap(), ps.clone()).unwrap();
    let mut s = state(Algorithm::Ftlp, &fam);
    s.set_predictive(&fam, law).unwrap();
    let r = fam.domain().diameter() / 2.0;
    let (oracle, _) = grid_argmax(-r, r, |th| xs.iter().zip(&ps).map(|(x, p)| p * (1.0 + th * (x - 0.4)).ln()).sum());
    assert!((s.theta_next()[0] - oracle).abs() < 1e-4, "{} vs {oracle}", s.theta_next()[0]);
    // the bet is charged on the next observation unchanged
    let th = s.theta_next()[0];
    let inc = s.step(&fam, &[0.1]).unwrap();
    assert_eq!(inc, fam.log_increment(&[th], &[0.1], 1).unwrap());
}

// ── regret ──────────────────────────────────────────────────────────────

#[test]
fn singleton_domain_has_zero_regret() {
    let fam = FamilySpec::builder(FamilyKind::BoundedIdentifiable, Functional::Mean, vec![0.4])
        .data_range(unit())
        .region(RegionSpec::Box { lo: vec![0.2], hi: vec![0.2] })
        .build()
        .unwrap();
    for algo in [Algorithm::Ftl, Algorithm::Ogd, Algorithm::FtrlProximal] {
        let mut s = state(algo, &fam);
        for x in beta_stream(4, 100) {
            s.step(&fam, x.as_slice()).unwrap();
        }
        assert_eq!(s.regret(&fam).unwrap(), 0.0, "{algo}");
    }
}

#[test]
fn best_fixed_bet_matches_grid_oracle() {
    let fam = mean_ident(0.45);
    let atoms = [0.05, 0.3, 0.8, 0.97];
    let mut rng = SplitMix64::new(9);
    let xs: Vec<f64> = (0..60).map(|_| atoms[rng.random_range(0..4)]).collect();
    let mut s = state(Algorithm::Ogd, &fam);
    for x in &xs {
        s.step(&fam, &[*x]).unwrap();
    }
    let r = fam.domain().diameter() / 2.0;
    let (th, v) = grid_argmax(-r, r, |th| xs.iter().map(|x| (1.0 + th * (x - 0.45)).ln()).sum());
    let (bt, bv) = s.best_fixed(&fam).unwrap();
    assert!((bt[0] - th).abs() < 1e-4 && (bv - v).abs() < 1e-6, "{bt:?} {bv} vs {th} {v}");
    assert!((s.regret(&fam).unwrap() - (v - s.log_wealth())).abs() < 1e-6);
}

/// Regret_t ≤ G²/(2μ) (1 + log t) along the whole path for FTL on a
/// strongly concave family.
#[test]
fn ftl_logarithmic_regret_bound() {
    let fam = gaussian_mean(0.4, 1.0, 1.0);
    let mu = fam.strong_concavity().unwrap();
    let g = fam.gradient_bound().unwrap();
    let mut s = state(Algorithm::Ftl, &fam);
    for (i, x) in beta_stream(77, 1000).iter().enumerate() {
        s.step(&fam, x.as_slice()).unwrap();
        let t = (i + 1) as f64;
        let bound = g * g / (2.0 * mu) * (1.0 + t.ln()) + 1e-6;
        assert!(s.regret(&fam).unwrap() <= bound, "t={t}");
    }
}

#[test]
fn ogd_and_ftrl_root_regret_bound() {
    let fam = mean_ident(0.4);
    let (g, d) = (fam.gradient_bound().unwrap(), fam.domain().diameter());
    for algo in [Algorithm::Ogd, Algorithm::FtrlProximal] {
        let mut s = state(algo, &fam);
        for (i, x) in beta_stream(5, 1000).iter().enumerate() {
            s.step(&fam, x.as_slice()).unwrap();
            let t = i + 1;
            if t % 50 == 0 {
                let bound = ROOT_REGRET_CONSTANT * g * d * (t as f64).sqrt();
                assert!(s.regret(&fam).unwrap() <= bound, "{algo} t={t}");
            }
        }
    }
}

// ── mixtures ────────────────────────────────────────────────────────────

#[test]
fn mixture_examples() {
    let fam = mean_ident(0.4);
    let x = [0.75];
    let g = fam.log_increment(&[0.6], &x, 3).unwrap();
    assert_eq!(mixture_step(&MixtureWeights::dirac(vec![0.6]), &fam, &x, 3).unwrap(), g);
    let two = MixtureWeights::new(vec![vec![0.6], vec![0.6]], vec![0.5, 0.5]).unwrap();
    assert!((mixture_step(&two, &fam, &x, 3).unwrap() - g).abs() < 1e-15);
    let atoms: Vec<f64> = vec![-1.2, -0.5, 0.0, 0.4, 1.3];
    let w = MixtureWeights::new(atoms.iter().map(|a| vec![*a]).collect(), vec![0.2; 5]).unwrap();
    let direct: f64 = atoms.iter().map(|a| 0.2 * (1.0 + a * 0.35)).sum::<f64>().ln();
    assert!((mixture_step(&w, &fam, &x, 1).unwrap() - direct).abs() < 1e-14);
    assert!(MixtureWeights::new(vec![vec![0.0]], vec![0.9]).is_err());
}

// ── properties ──────────────────────────────────────────────────────────

fn family_by_index(k: usize) -> FamilySpec {
    match k {
        0 => mean_ident(0.4),
        1 => FamilySpec::builder(FamilyKind::BoundedElicitable, Functional::quantile(0.3).unwrap(), vec![0.3])
            .data_range(unit())
            .build()
            .unwrap(),
        2 => gaussian_mean(0.3, 1.0, 1.0),
        _ => FamilySpec::builder(FamilyKind::SubPsiElicitable, Functional::Mean, vec![0.3])
            .psi(PsiSpec::hoeffding(0.0, 1.0).unwrap())
            .data_range(unit())
            .build()
            .unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The bet charged against X_t does not depend on X_t or anything after it.
    #[test]
    fn bets_are_predictable(seed in any::<u64>(), k in 0usize..4, split in 1usize..30, algo in 0usize..3) {
        let fam = family_by_index(k);
        let algo = [Algorithm::Ftl, Algorithm::Ogd, Algorithm::FtrlProximal][algo];
        let past = beta_stream(seed, split);
        let future_a = beta_stream(seed ^ 1, 10);
        let future_b: Vec<Observation> = future_a.iter().rev().cloned().collect();
        let mut a = state(algo, &fam);
        let mut b = state(algo, &fam);
        for x in &past {
            a.step(&fam, x.as_slice()).unwrap();
            b.step(&fam, x.as_slice()).unwrap();
        }
        prop_assert_eq!(a.theta_next(), b.theta_next());
        let th = a.theta_next().to_vec();
        let ia = a.step(&fam, future_a[0].as_slice()).unwrap();
        let ib = b.step(&fam, future_b[0].as_slice()).unwrap();
        prop_assert_eq!(ia, fam.log_increment(&th, future_a[0].as_slice(), split + 1).unwrap());
        prop_assert_eq!(ib, fam.log_increment(&th, future_b[0].as_slice(), split + 1).unwrap());
    }

    #[test]
    fn regret_is_nonnegative(seed in any::<u64>(), k in 0usize..4, n in 1usize..80) {
        let fam = family_by_index(k);
        for algo in [Algorithm::Ftl, Algorithm::Ogd, Algorithm::FtrlProximal] {
            let mut s = state(algo, &fam);
            for x in beta_stream(seed, n) {
                s.step(&fam, x.as_slice()).unwrap();
                prop_assert!(fam.domain().contains(s.theta_next(), 1e-9));
            }
            prop_assert!(s.regret(&fam).unwrap() >= -1e-8);
        }
    }
}
