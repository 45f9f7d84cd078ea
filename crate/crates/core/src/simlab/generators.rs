//! Seeded data generators.
//!
//! Every generator draws from a counter-based [`SplitMix64`] stream, so a
//! `(kind, seed)` pair fully determines the output on every platform.
//! Gaussians use the ziggurat sampler of `rand_distr`; Beta variates are
//! `G_a / (G_a + G_b)` for two independent Gamma draws.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteLaw;
use crate::error::{Error, Result};
use crate::functionals::ReferenceDistribution;
use crate::observation::{DataRange, Observation};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    IidBeta {
        a: f64,
        b: f64,
    },
    IidGaussian {
        mean: f64,
        sd: f64,
    },
    /// `X_{t+1} = β X_t + ξ_{t+1}`, `ξ ~ N(0, noise_sd²)`, stationary start.
    /// Emits `[X_{t−1}, X_t]`.
    Ar1 {
        beta: f64,
        noise_sd: f64,
    },
    DiscreteIid {
        law: DiscreteLaw<Vec<f64>>,
    },
}

impl GeneratorKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::IidBeta { a, b } => *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite(),
            Self::IidGaussian { mean, sd } => mean.is_finite() && *sd >= 0.0 && sd.is_finite(),
            Self::Ar1 { beta, noise_sd } => {
                if !(beta.abs() < 1.0) {
                    return Err(Error::Param(format!("AR(1) with |beta| = {} has no stationary start", beta.abs())));
                }
                *noise_sd >= 0.0 && noise_sd.is_finite()
            }
            Self::DiscreteIid { law } => {
                let d = law.atoms().first().map_or(0, Vec::len);
                d > 0 && law.atoms().iter().all(|a| a.len() == d && a.iter().all(|v| v.is_finite()))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Param(format!("invalid generator parameters {self:?}")))
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Self::Ar1 { .. } => 2,
            Self::DiscreteIid { law } => law.atoms().first().map_or(0, Vec::len),
            _ => 1,
        }
    }

    /// The law (or model) behind the generator, for computing true values.
    pub fn reference(&self) -> ReferenceDistribution {
        match self {
            Self::IidBeta { a, b } => ReferenceDistribution::Beta { a: *a, b: *b },
            Self::IidGaussian { mean, sd } => ReferenceDistribution::Gaussian { mean: *mean, sd: *sd },
            Self::Ar1 { beta, noise_sd } => ReferenceDistribution::Ar1 { beta: *beta, noise_sd: *noise_sd },
            Self::DiscreteIid { law } => ReferenceDistribution::Discrete(law.clone()),
        }
    }

    /// Tightest range the generator is guaranteed to respect.
    pub fn support(&self) -> DataRange {
        match self {
            Self::IidBeta { .. } => DataRange::interval(0.0, 1.0).expect("valid"),
            Self::DiscreteIid { law } => {
                let d = self.obs_dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for a in law.atoms() {
                    for i in 0..d {
                        lo[i] = lo[i].min(a[i]);
                        hi[i] = hi[i].max(a[i]);
                    }
                }
                DataRange::new(lo, hi).expect("atoms are finite")
            }
            _ => DataRange::unbounded(self.obs_dim()),
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::IidBeta { a, b } => write!(f, "beta:{a}:{b}"),
            Self::IidGaussian { mean, sd } => write!(f, "gaussian:{mean}:{sd}"),
            Self::Ar1 { beta, noise_sd } => write!(f, "ar1:{beta}:{noise_sd}"),
            Self::DiscreteIid { law } => {
                let atoms: Vec<String> = law
                    .iter()
                    .map(|(a, p)| {
                        let v: Vec<String> = a.iter().map(|x| x.to_string()).collect();
                        format!("{}/{p}", v.join(";"))
                    })
                    .collect();
                write!(f, "discrete:{}", atoms.join(","))
            }
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    /// `beta:a:b`, `gaussian:mean:sd`, `ar1:beta:noise_sd`, or
    /// `discrete:x/p,x/p,...` (vector atoms as `x1;x2/p`).
    fn from_str(s: &str) -> Result<Self> {
        let bad =
            || Error::Parse(format!("generator `{s}` is not beta:a:b, gaussian:m:s, ar1:beta:sd or discrete:x/p,..."));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let (head, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        let kind = match head {
            "discrete" => {
                let mut atoms = Vec::new();
                let mut probs = Vec::new();
                for part in rest.split(',') {
                    let (x, p) = part.split_once('/').ok_or_else(bad)?;
                    atoms.push(x.split(';').map(num).collect::<Result<Vec<f64>>>()?);
                    probs.push(num(p)?);
                }
                Self::DiscreteIid { law: DiscreteLaw::new(atoms, probs)? }
            }
            _ => {
                let f: Vec<&str> = rest.split(':').collect();
                if f.len() != 2 {
                    return Err(bad());
                }
                let (a, b) = (num(f[0])?, num(f[1])?);
                match head {
                    "beta" => Self::IidBeta { a, b },
                    "gaussian" => Self::IidGaussian { mean: a, sd: b },
                    "ar1" => Self::Ar1 { beta: a, noise_sd: b },
                    _ => return Err(bad()),
                }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A seeded, infinite stream of observations.
#[derive(Debug, Clone)]
pub struct Generator {
    kind: GeneratorKind,
    seed: u64,
    rng: SplitMix64,
    gammas: Option<(Gamma<f64>, Gamma<f64>)>,
    cumulative: Vec<f64>,
    prev: f64,
}

impl Generator {
    pub fn new(kind: GeneratorKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        let mut rng = SplitMix64::new(seed);
        let gammas = match &kind {
            GeneratorKind::IidBeta { a, b } => Some((
                Gamma::new(*a, 1.0).map_err(|e| Error::Param(e.to_string()))?,
                Gamma::new(*b, 1.0).map_err(|e| Error::Param(e.to_string()))?,
            )),
            _ => None,
        };
        let cumulative = match &kind {
            GeneratorKind::DiscreteIid { law } => law
                .probs()
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect(),
            _ => Vec::new(),
        };
        let prev = match &kind {
            GeneratorKind::Ar1 { beta, noise_sd } => {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * noise_sd / (1.0 - beta * beta).sqrt()
            }
            _ => 0.0,
        };
        Ok(Self { kind, seed, rng, gammas, cumulative, prev })
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_observation(&mut self) -> Observation {
        let v = match &self.kind {
            GeneratorKind::IidBeta { .. } => {
                let (ga, gb) = self.gammas.as_ref().expect("set for beta");
                let x = ga.sample(&mut self.rng);
                let y = gb.sample(&mut self.rng);
                vec![x / (x + y)]
            }
            GeneratorKind::IidGaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                vec![mean + sd * z]
            }
            GeneratorKind::Ar1 { beta, noise_sd } => {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                let x = beta * self.prev + noise_sd * z;
                let out = vec![self.prev, x];
                self.prev = x;
                out
            }
            GeneratorKind::DiscreteIid { law } => {
                let u: f64 = self.rng.random();
                let last = self.cumulative.len() - 1;
                let idx = self.cumulative.iter().position(|&c| u < c).unwrap_or(last);
                law.atoms()[idx].clone()
            }
        };
        Observation::new(v).expect("generators emit finite values")
    }

    /// The next `n ≥ 1` observations.
    pub fn generate(&mut self, n: usize) -> Result<Vec<Observation>> {
        if n == 0 {
            return Err(Error::Param("generate needs n >= 1".into()));
        }
        Ok((0..n).map(|_| self.next_observation()).collect())
    }
}

impl Iterator for Generator {
    type Item = Observation;

    fn next(&mut self) -> Option<Observation> {
        Some(self.next_observation())
    }
}

/// `n` observations from a fresh generator.
pub fn generate(kind: &GeneratorKind, seed: u64, n: usize) -> Result<Vec<Observation>> {
    Generator::new(kind.clone(), seed)?.generate(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let k = GeneratorKind::IidBeta { a: 2.0, b: 5.0 };
        assert_eq!(generate(&k, 9, 50).unwrap(), generate(&k, 9, 50).unwrap());
        assert_ne!(generate(&k, 9, 50).unwrap(), generate(&k, 10, 50).unwrap());
    }

    #[test]
    fn ar1_emits_lagged_pairs() {
        let xs = generate(&GeneratorKind::Ar1 { beta: 0.5, noise_sd: 1.0 }, 1, 20).unwrap();
        for w in xs.windows(2) {
            assert_eq!(w[0][1], w[1][0]);
        }
    }

    #[test]
    fn explosive_ar1_rejected() {
        assert!(matches!(Generator::new(GeneratorKind::Ar1 { beta: 1.0, noise_sd: 1.0 }, 0), Err(Error::Param(_))));
    }

    #[test]
    fn text_round_trip() {
        for s in ["beta:2:5", "gaussian:0:1", "ar1:0.5:0.8", "discrete:0/0.5,1/0.5", "discrete:1;2/0.25,3;4/0.75"] {
            let g: GeneratorKind = s.parse().unwrap();
            assert_eq!(g.to_string(), s);
        }
        assert!("ar1:1:1".parse::<GeneratorKind>().is_err());
        assert!("poisson:1:1".parse::<GeneratorKind>().is_err());
    }

    #[test]
    fn zero_length_rejected() {
        assert!(generate(&GeneratorKind::IidGaussian { mean: 0.0, sd: 1.0 }, 0, 0).is_err());
    }
}
