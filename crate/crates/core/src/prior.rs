//! Finite mixtures of Gaussians and point masses on the real line.
//!
//! A point mass is a component with zero variance, so one type covers
//! discrete alphabets (BPSK), sparse spike-and-slab mixtures, and smooth
//! multi-modal signals alike.

use crate::error::{CoreError, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One mixture component: `weight` times N(`mean`, `variance`), where
/// `variance = 0` denotes a point mass at `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// A validated signal prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    components: Vec<Component>,
}

const WEIGHT_SUM_TOL: f64 = 1e-9;
const WEIGHT_EXACT_TOL: f64 = 1e-12;

impl Prior {
    /// Build from `(weight, mean, variance)` triples.
    ///
    /// Weights must be nonnegative and sum to 1 within 1e-9; zero-weight
    /// components are dropped. The result must carry positive variance
    /// overall, otherwise the signal is deterministic and every downstream
    /// quantity is trivially zero.
    pub fn new(components: &[(f64, f64, f64)]) -> Result<Self> {
        if components.is_empty() {
            return Err(CoreError::DegeneratePrior("no components".into()));
        }
        for &(w, m, v) in components {
            if !w.is_finite() || !m.is_finite() || !v.is_finite() {
                return Err(CoreError::OutOfRange {
                    name: "component",
                    value: if !w.is_finite() {
                        w
                    } else if !m.is_finite() {
                        m
                    } else {
                        v
                    },
                    reason: "non-finite entry".into(),
                });
            }
            if w < 0.0 {
                return Err(CoreError::InvalidWeight(format!("negative weight {w}")));
            }
            if v < 0.0 {
                return Err(CoreError::OutOfRange {
                    name: "variance",
                    value: v,
                    reason: "must be nonnegative".into(),
                });
            }
        }
        let sum: f64 = components.iter().map(|c| c.0).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(CoreError::InvalidWeight(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        let mut kept: Vec<Component> = components
            .iter()
            .filter(|c| c.0 > 0.0)
            .map(|&(weight, mean, variance)| Component {
                weight,
                mean,
                variance,
            })
            .collect();
        if kept.is_empty() {
            return Err(CoreError::DegeneratePrior("all weights zero".into()));
        }
        // Renormalize only when the drift is detectable; bit-exact weights
        // survive a serialize/deserialize round trip.
        if (sum - 1.0).abs() > WEIGHT_EXACT_TOL {
            for c in &mut kept {
                c.weight /= sum;
            }
        }
        let p = Prior { components: kept };
        if p.variance() <= 0.0 {
            return Err(CoreError::DegeneratePrior(
                "signal is a single point mass".into(),
            ));
        }
        Ok(p)
    }

    /// Standard normal signal.
    pub fn gaussian_unit() -> Self {
        Prior::new(&[(1.0, 0.0, 1.0)]).unwrap()
    }

    /// Equiprobable +/-1 signal.
    pub fn bpsk() -> Self {
        Prior::new(&[(0.5, -1.0, 0.0), (0.5, 1.0, 0.0)]).unwrap()
    }

    /// Three-Gaussian family 0.4 N(0,5) + alpha N(40,5) + (0.6-alpha) N(220,5).
    ///
    /// Small `alpha` gives a single first-order jump; larger `alpha` splits
    /// the mass so the fixed-point curve folds twice.
    pub fn figure1(alpha: f64) -> Result<Self> {
        if !(0.0..=0.6).contains(&alpha) {
            return Err(CoreError::OutOfRange {
                name: "alpha",
                value: alpha,
                reason: "must lie in [0, 0.6]".into(),
            });
        }
        Prior::new(&[
            (0.4, 0.0, 5.0),
            (alpha, 40.0, 5.0),
            (0.6 - alpha, 220.0, 5.0),
        ])
    }

    /// Sparse signal (1-rho) delta_0 + rho N(0, var).
    pub fn bernoulli_gaussian(rho: f64, var: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(CoreError::OutOfRange {
                name: "rho",
                value: rho,
                reason: "must lie in [0, 1]".into(),
            });
        }
        if var <= 0.0 {
            return Err(CoreError::OutOfRange {
                name: "var",
                value: var,
                reason: "must be positive".into(),
            });
        }
        Prior::new(&[(1.0 - rho, 0.0, 0.0), (rho, 0.0, var)])
    }

    /// Parse a preset name: `gaussian`, `bpsk`, `fig1:<alpha>`,
    /// `bernoulli-gaussian:<rho>:<var>`, or a path to a JSON prior file.
    pub fn from_preset(name: &str) -> Result<Self> {
        match name {
            "gaussian" => return Ok(Prior::gaussian_unit()),
            "bpsk" => return Ok(Prior::bpsk()),
            _ => {}
        }
        if let Some(rest) = name.strip_prefix("fig1:") {
            let alpha: f64 = rest
                .parse()
                .map_err(|_| CoreError::DomainError(format!("bad fig1 parameter {rest:?}")))?;
            return Prior::figure1(alpha);
        }
        if let Some(rest) = name.strip_prefix("bernoulli-gaussian:") {
            let mut it = rest.splitn(2, ':');
            let (a, b) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
            let rho: f64 = a.parse().map_err(|_| {
                CoreError::DomainError(format!("bad bernoulli-gaussian rho {a:?}"))
            })?;
            let var: f64 = b.parse().map_err(|_| {
                CoreError::DomainError(format!("bad bernoulli-gaussian var {b:?}"))
            })?;
            return Prior::bernoulli_gaussian(rho, var);
        }
        Err(CoreError::DomainError(format!("unknown preset {name:?}")))
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let m2: f64 = self
            .components
            .iter()
            .map(|c| c.weight * (c.mean * c.mean + c.variance))
            .sum();
        m2 - m * m
    }

    /// Raw fourth moment E[X^4].
    pub fn fourth_moment(&self) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let (m2, v) = (c.mean * c.mean, c.variance);
                c.weight * (m2 * m2 + 6.0 * m2 * v + 3.0 * v * v)
            })
            .sum()
    }

    /// `(mean, variance, fourth_raw_moment)` in one call.
    pub fn moments(&self) -> (f64, f64, f64) {
        (self.mean(), self.variance(), self.fourth_moment())
    }

    /// Exactly one component with positive variance.
    pub fn is_pure_gaussian(&self) -> bool {
        self.components.len() == 1 && self.components[0].variance > 0.0
    }

    /// Every component is a point mass.
    pub fn is_finite_alphabet(&self) -> bool {
        self.components.iter().all(|c| c.variance == 0.0)
    }

    /// Point-mass support as `(value, probability)` pairs; `None` when any
    /// component is continuous.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        if !self.is_finite_alphabet() {
            return None;
        }
        Some(self.components.iter().map(|c| (c.mean, c.weight)).collect())
    }

    /// Hex digest over the exact component bits; embedded in output headers
    /// so artifacts can be traced back to the prior that produced them.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.components {
            h.update(c.weight.to_bits().to_be_bytes());
            h.update(c.mean.to_bits().to_be_bytes());
            h.update(c.variance.to_bits().to_be_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Draw one signal coordinate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u: f64 = rng.gen();
        let mut comp = self.components[self.components.len() - 1];
        for c in &self.components {
            if u < c.weight {
                comp = *c;
                break;
            }
            u -= c.weight;
        }
        if comp.variance == 0.0 {
            comp.mean
        } else {
            let z: f64 = rng.sample(StandardNormal);
            comp.mean + comp.variance.sqrt() * z
        }
    }

    /// Draw the component index, then the value given that component.
    pub fn sample_with_component<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let mut u: f64 = rng.gen();
        let mut idx = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            if u < c.weight {
                idx = i;
                break;
            }
            u -= c.weight;
        }
        let c = self.components[idx];
        let x = if c.variance == 0.0 {
            c.mean
        } else {
            let z: f64 = rng.sample(StandardNormal);
            c.mean + c.variance.sqrt() * z
        };
        (idx, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_weights() {
        assert!(matches!(
            Prior::new(&[(0.5, 0.0, 1.0), (0.6, 1.0, 1.0)]),
            Err(CoreError::InvalidWeight(_))
        ));
        assert!(matches!(
            Prior::new(&[(-0.1, 0.0, 1.0), (1.1, 1.0, 1.0)]),
            Err(CoreError::InvalidWeight(_))
        ));
    }

    #[test]
    fn rejects_degenerate() {
        assert!(matches!(
            Prior::new(&[]),
            Err(CoreError::DegeneratePrior(_))
        ));
        assert!(matches!(
            Prior::new(&[(1.0, 3.0, 0.0)]),
            Err(CoreError::DegeneratePrior(_))
        ));
        // Two atoms at the same location still carry zero variance.
        assert!(matches!(
            Prior::new(&[(0.5, 2.0, 0.0), (0.5, 2.0, 0.0)]),
            Err(CoreError::DegeneratePrior(_))
        ));
    }

    #[test]
    fn rejects_negative_variance() {
        assert!(matches!(
            Prior::new(&[(1.0, 0.0, -1.0)]),
            Err(CoreError::OutOfRange { .. })
        ));
    }

    #[test]
    fn drops_zero_weight_components() {
        let p = Prior::new(&[(1.0, 0.0, 1.0), (0.0, 5.0, 1.0)]).unwrap();
        assert_eq!(p.components().len(), 1);
        assert!(p.is_pure_gaussian());
    }

    #[test]
    fn moments_bpsk() {
        let (m, v, x4) = Prior::bpsk().moments();
        assert_eq!(m, 0.0);
        assert_eq!(v, 1.0);
        assert_eq!(x4, 1.0);
    }

    #[test]
    fn moments_gaussian() {
        let (m, v, x4) = Prior::gaussian_unit().moments();
        assert_eq!(m, 0.0);
        assert_eq!(v, 1.0);
        assert_eq!(x4, 3.0);
    }

    #[test]
    fn moments_two_gaussian_mixture() {
        let p = Prior::new(&[(0.3, -2.0, 0.5), (0.7, 1.0, 1.5)]).unwrap();
        let (m, v, x4) = p.moments();
        assert!((m - 0.1).abs() < 1e-15);
        assert!((v - 3.09).abs() < 1e-14);
        assert!((x4 - 20.35).abs() < 1e-13);
    }

    #[test]
    fn moments_bernoulli_gaussian() {
        let p = Prior::bernoulli_gaussian(0.1, 10.0).unwrap();
        let (m, v, x4) = p.moments();
        assert_eq!(m, 0.0);
        assert!((v - 1.0).abs() < 1e-15);
        assert!((x4 - 30.0).abs() < 1e-13);
    }

    #[test]
    fn moments_three_gaussian_family() {
        let p = Prior::figure1(0.1).unwrap();
        let (m, v, x4) = p.moments();
        assert!((m - 114.0).abs() < 1e-10);
        assert!((v - 11369.0).abs() < 1e-8);
        assert!((x4 - 1_172_266_875.0).abs() < 1.0);

        let p = Prior::figure1(0.3).unwrap();
        let (m, v, x4) = p.moments();
        assert!((m - 78.0).abs() < 1e-10);
        assert!((v - 8921.0).abs() < 1e-8);
        assert!((x4 - 703_986_075.0).abs() < 1.0);
    }

    #[test]
    fn preset_parsing() {
        assert!(Prior::from_preset("gaussian").unwrap().is_pure_gaussian());
        assert!(Prior::from_preset("bpsk").unwrap().is_finite_alphabet());
        let p = Prior::from_preset("fig1:0.1").unwrap();
        assert_eq!(p.components().len(), 3);
        let p = Prior::from_preset("bernoulli-gaussian:0.1:10").unwrap();
        assert!((p.variance() - 1.0).abs() < 1e-15);
        assert!(Prior::from_preset("cauchy").is_err());
        assert!(Prior::from_preset("fig1:0.7").is_err());
        assert!(Prior::from_preset("bernoulli-gaussian:2:1").is_err());
    }

    #[test]
    fn alphabet_helpers() {
        let p = Prior::bpsk();
        let atoms = p.atoms().unwrap();
        assert_eq!(atoms, vec![(-1.0, 0.5), (1.0, 0.5)]);
        assert!(Prior::gaussian_unit().atoms().is_none());
    }

    #[test]
    fn hash_stable_and_sensitive() {
        let a = Prior::bpsk().hash_hex();
        let b = Prior::bpsk().hash_hex();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        let c = Prior::gaussian_unit().hash_hex();
        assert_ne!(a, c);
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let p = Prior::figure1(0.1).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: Prior = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.hash_hex(), q.hash_hex());
    }

    #[test]
    fn sampling_matches_moments() {
        let p = Prior::new(&[(0.3, -2.0, 0.5), (0.7, 1.0, 1.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = p.sample(&mut rng);
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.1).abs() < 0.02, "mean {mean}");
        assert!((var - 3.09).abs() < 0.05, "var {var}");
    }

    #[test]
    fn sampling_finite_alphabet_frequencies() {
        let p = Prior::bernoulli_gaussian(0.1, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let zeros = (0..n).filter(|_| p.sample(&mut rng) == 0.0).count();
        let frac = zeros as f64 / n as f64;
        assert!((frac - 0.9).abs() < 0.01, "zero fraction {frac}");
    }
}
