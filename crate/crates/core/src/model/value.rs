use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of the nonzero entries of a sparse code: a symmetric sign times a
/// magnitude in `[1, C]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ValueModel {
    /// Uniform signs, magnitude 1.
    Rademacher,
    /// Uniform sign times a magnitude uniform on `[1, c]`.
    UniformSpikeSlab { c: f64 },
    /// Uniform sign times a magnitude drawn uniformly from `levels`.
    DiscreteSymmetric { levels: Vec<f64> },
}

impl ValueModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ValueModel::Rademacher => Ok(()),
            ValueModel::UniformSpikeSlab { c } if *c >= 1.0 && c.is_finite() => Ok(()),
            ValueModel::UniformSpikeSlab { c } => {
                Err(Error::invalid(format!("magnitude bound must be >= 1, got {c}")))
            }
            ValueModel::DiscreteSymmetric { levels } => {
                if levels.is_empty() || levels.iter().any(|&l| !(l >= 1.0) || !l.is_finite()) {
                    Err(Error::invalid("discrete levels must be finite and >= 1"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Magnitude bound `C`.
    pub fn c(&self) -> f64 {
        match self {
            ValueModel::Rademacher => 1.0,
            ValueModel::UniformSpikeSlab { c } => *c,
            ValueModel::DiscreteSymmetric { levels } => levels.iter().cloned().fold(1.0, f64::max),
        }
    }

    pub fn is_rademacher(&self) -> bool {
        match self {
            ValueModel::Rademacher => true,
            ValueModel::DiscreteSymmetric { levels } => levels.iter().all(|&l| l == 1.0),
            ValueModel::UniformSpikeSlab { c } => *c == 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let mag = match self {
            ValueModel::Rademacher => 1.0,
            ValueModel::UniformSpikeSlab { c } => {
                if *c > 1.0 {
                    rng.gen_range(1.0..=*c)
                } else {
                    1.0
                }
            }
            ValueModel::DiscreteSymmetric { levels } => levels[rng.gen_range(0..levels.len())],
        };
        sign * mag
    }

    /// `Pr[|v| in [1, 1 + eta]]`, computed from the law directly.
    pub fn gamma0_mass(&self, eta: f64) -> f64 {
        match self {
            ValueModel::Rademacher => 1.0,
            ValueModel::UniformSpikeSlab { c } => {
                if *c <= 1.0 {
                    1.0
                } else {
                    (eta / (c - 1.0)).clamp(0.0, 1.0)
                }
            }
            ValueModel::DiscreteSymmetric { levels } => {
                levels.iter().filter(|&&l| l <= 1.0 + eta).count() as f64 / levels.len() as f64
            }
        }
    }

    /// The finite signed support with probabilities, when the law is discrete.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            ValueModel::Rademacher => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            ValueModel::UniformSpikeSlab { c } if *c == 1.0 => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            ValueModel::UniformSpikeSlab { .. } => None,
            ValueModel::DiscreteSymmetric { levels } => {
                let p = 0.5 / levels.len() as f64;
                Some(levels.iter().flat_map(|&l| [(-l, p), (l, p)]).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};

    fn models() -> Vec<ValueModel> {
        vec![
            ValueModel::Rademacher,
            ValueModel::UniformSpikeSlab { c: 2.5 },
            ValueModel::DiscreteSymmetric {
                levels: vec![1.0, 1.5, 3.0],
            },
        ]
    }

    #[test]
    fn magnitudes_in_range_and_mean_symmetric() {
        for model in models() {
            let mut rng = stream(11, domain::VALUES, 0);
            let n = 100_000;
            let draws: Vec<f64> = (0..n).map(|_| model.sample(&mut rng)).collect();
            let c = model.c();
            assert!(draws.iter().all(|v| v.abs() >= 1.0 && v.abs() <= c));
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let se = (var / n as f64).sqrt();
            assert!(mean.abs() <= 3.0 * se, "{model:?}: mean {mean}, se {se}");
        }
    }

    #[test]
    fn gamma0_mass_matches_counting() {
        let eta = 0.2;
        for model in models() {
            let mut rng = stream(12, domain::VALUES, 0);
            let n = 200_000;
            let hits = (0..n)
                .filter(|_| model.sample(&mut rng).abs() <= 1.0 + eta)
                .count() as f64
                / n as f64;
            let exact = model.gamma0_mass(eta);
            let se = (exact * (1.0 - exact) / n as f64).sqrt().max(1e-12);
            assert!((hits - exact).abs() <= 4.0 * se, "{model:?}: {hits} vs {exact}");
        }
        assert_eq!(ValueModel::UniformSpikeSlab { c: 3.0 }.gamma0_mass(0.5), 0.25);
    }

    #[test]
    fn validation() {
        assert!(ValueModel::UniformSpikeSlab { c: 0.5 }.validate().is_err());
        assert!(ValueModel::DiscreteSymmetric { levels: vec![] }.validate().is_err());
        assert!(ValueModel::DiscreteSymmetric { levels: vec![1.0, 2.0] }.validate().is_ok());
    }
}
