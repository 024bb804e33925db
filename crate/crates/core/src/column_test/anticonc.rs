//! Weak anti-concentration of weighted symmetric sums `Z = sum a_i x_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ValueModel;
use crate::rng::{domain, stream};

/// Pattern limit for exhaustive enumeration.
pub const EXACT_PATTERN_LIMIT: u128 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum AnticoncMode {
    Exact,
    MonteCarlo { trials: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnticoncReport {
    pub p_outer: f64,
    pub p_inner: f64,
    pub c0: f64,
    pub c1: f64,
    /// `p_inner >= min(p_outer / 2, c0)`.
    pub lemma_satisfied: bool,
    pub linf: f64,
    /// `||a||_inf <= c1 t`
    pub linf_ok: bool,
    /// `beta` in `(1/(16C), 7/(16C))`
    pub beta_ok: bool,
    /// `eta_p < 1/(32C)`
    pub eta_ok: bool,
    pub outer: (f64, f64),
    pub inner: (f64, f64),
    /// Patterns enumerated or trials drawn.
    pub evaluations: u64,
}

impl AnticoncReport {
    pub fn preconditions_hold(&self) -> bool {
        self.linf_ok && self.beta_ok && self.eta_ok
    }
}

fn std_normal_gap(lo: f64, hi: f64) -> f64 {
    // Phi(hi) - Phi(lo) for 0 <= lo <= hi, through erfc to keep the tail digits
    let s = std::f64::consts::FRAC_1_SQRT_2;
    0.5 * (libm::erfc(lo * s) - libm::erfc(hi * s))
}

/// `min over r in [1/(32 C^2), 10 C]` of `(Phi(3r) - Phi(r)) / 2`.
pub fn anticoncentration_c0(c: f64) -> f64 {
    let (lo, hi) = (1.0 / (32.0 * c * c), 10.0 * c);
    const GRID: usize = 20_000;
    let f = |r: f64| 0.5 * std_normal_gap(r, 3.0 * r);
    let mut best = f(lo).min(f(hi));
    // log grid: the function varies over many decades near the top end
    let (ll, lh) = (lo.ln(), hi.ln());
    for s in 1..GRID {
        let r = (ll + (lh - ll) * s as f64 / GRID as f64).exp();
        best = best.min(f(r));
    }
    best
}

pub fn anticoncentration_c1(c: f64) -> f64 {
    anticoncentration_c0(c) / (80.0 * c * c)
}

/// Measures `Pr[Z in outer]` and `Pr[Z in inner]` (closed intervals) and
/// checks `p_inner >= min(p_outer / 2, c0)`. `c0` defaults to
/// [`anticoncentration_c0`].
#[allow(clippy::too_many_arguments)]
pub fn weak_anticoncentration_check(
    a: &[f64],
    t: f64,
    eta_p: f64,
    beta: f64,
    value: &ValueModel,
    mode: AnticoncMode,
    c0: Option<f64>,
) -> Result<AnticoncReport> {
    value.validate()?;
    if a.is_empty() {
        return Err(Error::invalid("empty weight vector"));
    }
    let l2: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (l2 - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("weights must have unit l2 norm, got {l2}")));
    }
    if t < 1.0 {
        return Err(Error::invalid("t must be >= 1"));
    }
    if !(0.0..1.0).contains(&eta_p) {
        return Err(Error::invalid("eta' must be in [0,1)"));
    }
    let c = value.c();
    let outer = ((1.0 - eta_p) * t, (1.0 + eta_p) * c * t);
    let inner = (beta * (1.0 - eta_p) * t / 2.0, 3.0 * beta * (1.0 + eta_p) * c * t / 2.0);
    let inside = |z: f64, iv: (f64, f64)| z >= iv.0 && z <= iv.1;

    let (p_outer, p_inner, evaluations) = match mode {
        AnticoncMode::Exact => {
            let atoms = value
                .atoms()
                .ok_or_else(|| Error::invalid("exact mode needs a discrete value law"))?;
            let patterns = (atoms.len() as u128).checked_pow(a.len() as u32).unwrap_or(u128::MAX);
            if patterns > EXACT_PATTERN_LIMIT {
                return Err(Error::TooLarge { patterns, limit: EXACT_PATTERN_LIMIT });
            }
            let mut digits = vec![0usize; a.len()];
            let (mut po, mut pi) = (0.0, 0.0);
            for _ in 0..patterns {
                let mut z = 0.0;
                let mut p = 1.0;
                for (ai, &d) in a.iter().zip(&digits) {
                    z += ai * atoms[d].0;
                    p *= atoms[d].1;
                }
                if inside(z, outer) {
                    po += p;
                }
                if inside(z, inner) {
                    pi += p;
                }
                for d in digits.iter_mut() {
                    *d += 1;
                    if *d < atoms.len() {
                        break;
                    }
                    *d = 0;
                }
            }
            (po, pi, patterns as u64)
        }
        AnticoncMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::invalid("monte-carlo mode needs at least one trial"));
            }
            let mut rng = stream(seed, domain::EXPERIMENT, 0);
            let (mut no, mut ni) = (0u64, 0u64);
            for _ in 0..trials {
                let z: f64 = a.iter().map(|ai| ai * value.sample(&mut rng)).sum();
                no += inside(z, outer) as u64;
                ni += inside(z, inner) as u64;
            }
            (no as f64 / trials as f64, ni as f64 / trials as f64, trials as u64)
        }
    };
    let c0 = c0.unwrap_or_else(|| anticoncentration_c0(c));
    let c1 = c0 / (80.0 * c * c);
    let linf = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(AnticoncReport {
        p_outer,
        p_inner,
        c0,
        c1,
        lemma_satisfied: p_inner >= (p_outer / 2.0).min(c0),
        linf,
        linf_ok: linf <= c1 * t,
        beta_ok: beta > 1.0 / (16.0 * c) && beta < 7.0 / (16.0 * c),
        eta_ok: eta_p < 1.0 / (32.0 * c),
        outer,
        inner,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c0_matches_endpoint_minimum() {
        // Phi(3r) - Phi(r) rises then falls, so the minimum sits at an endpoint
        for c in [1.0, 1.5, 3.0] {
            let lo = 1.0 / (32.0 * c * c);
            let hi = 10.0 * c;
            let end = (0.5 * std_normal_gap(lo, 3.0 * lo)).min(0.5 * std_normal_gap(hi, 3.0 * hi));
            let c0 = anticoncentration_c0(c);
            assert!(c0 > 0.0);
            assert!((c0 - end).abs() <= 1e-12 * end.max(1e-300), "{c0} vs {end}");
        }
        // right tail at r = 10 is about phi(10)/10
        let c0 = anticoncentration_c0(1.0);
        assert!(c0 > 3e-24 && c0 < 4e-24, "{c0}");
    }

    #[test]
    fn single_coordinate_flags_precondition() {
        let r = weak_anticoncentration_check(&[1.0], 1.0, 0.05, 0.25, &ValueModel::Rademacher, AnticoncMode::Exact, None)
            .unwrap();
        assert_eq!(r.p_outer, 0.5);
        assert_eq!(r.p_inner, 0.0);
        assert!(!r.linf_ok);
    }

    #[test]
    fn zero_outer_mass_is_vacuous() {
        // with 4 equal weights Z lies in {0, +-1, +-2}; t = 3 puts [2.85, 3.15] out of reach
        let a = [0.5; 4];
        let r = weak_anticoncentration_check(&a, 3.0, 0.05, 0.25, &ValueModel::Rademacher, AnticoncMode::Exact, Some(0.1))
            .unwrap();
        assert_eq!(r.p_outer, 0.0);
        assert!(r.lemma_satisfied);
    }

    #[test]
    fn exact_matches_binomial_count() {
        // 4 weights of 1/2: Z = (#plus - 2), Pr[Z = 1] = 4/16
        let a = [0.5; 4];
        let r = weak_anticoncentration_check(&a, 1.0, 0.05, 0.25, &ValueModel::Rademacher, AnticoncMode::Exact, None)
            .unwrap();
        assert_eq!(r.p_outer, 0.25);
        assert_eq!(r.evaluations, 16);
    }

    #[test]
    fn monte_carlo_tracks_exact() {
        let a: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let s = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let a: Vec<f64> = a.iter().map(|v| v / s).collect();
        let v = ValueModel::Rademacher;
        let ex = weak_anticoncentration_check(&a, 1.0, 0.2, 0.25, &v, AnticoncMode::Exact, None).unwrap();
        let mc = weak_anticoncentration_check(&a, 1.0, 0.2, 0.25, &v, AnticoncMode::MonteCarlo { trials: 200_000, seed: 3 }, None)
            .unwrap();
        for (e, m) in [(ex.p_outer, mc.p_outer), (ex.p_inner, mc.p_inner)] {
            let se = (e * (1.0 - e) / 200_000.0f64).sqrt().max(1e-6);
            assert!((e - m).abs() < 5.0 * se, "{e} {m}");
        }
    }

    #[test]
    fn too_large_and_bad_inputs() {
        let a = vec![1.0 / 21f64.sqrt(); 21];
        assert!(matches!(
            weak_anticoncentration_check(&a, 1.0, 0.05, 0.25, &ValueModel::Rademacher, AnticoncMode::Exact, None),
            Err(Error::TooLarge { .. })
        ));
        assert!(weak_anticoncentration_check(&[0.5], 1.0, 0.05, 0.25, &ValueModel::Rademacher, AnticoncMode::Exact, None).is_err());
        assert!(weak_anticoncentration_check(
            &[1.0],
            1.0,
            0.05,
            0.25,
            &ValueModel::UniformSpikeSlab { c: 2.0 },
            AnticoncMode::Exact,
            None
        )
        .is_err());
    }
}
