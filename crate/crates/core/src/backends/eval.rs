//! Agreement measures for stance labelings: per-class and macro F1, and
//! Cohen's kappa.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ArgumentLabel, Stance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Report {
    pub per_class: BTreeMap<Stance, ClassScores>,
    /// Unweighted mean over classes present in gold or predictions.
    pub macro_f1: f64,
}

/// Pairs the stances of two labelings by post id.
fn aligned(a: &[ArgumentLabel], b: &[ArgumentLabel]) -> Result<Vec<(Stance, Stance)>> {
    let bm: HashMap<&str, Stance> = b.iter().map(|l| (l.post_id.as_str(), l.stance)).collect();
    let am: HashMap<&str, Stance> = a.iter().map(|l| (l.post_id.as_str(), l.stance)).collect();
    if am.len() != bm.len() || am.keys().any(|k| !bm.contains_key(k)) {
        return Err(Error::Invalid("labelings cover different post ids".into()));
    }
    let mut ids: Vec<&str> = am.keys().copied().collect();
    ids.sort_unstable();
    Ok(ids.into_iter().map(|id| (am[id], bm[id])).collect())
}

fn f1_from_pairs(pairs: &[(Stance, Stance)]) -> F1Report {
    let mut per_class = BTreeMap::new();
    let mut present = Vec::new();
    for class in Stance::ALL {
        let tp = pairs
            .iter()
            .filter(|&&(p, g)| p == class && g == class)
            .count();
        let predicted = pairs.iter().filter(|&&(p, _)| p == class).count();
        let support = pairs.iter().filter(|&&(_, g)| g == class).count();
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if predicted + support > 0 {
            present.push(f1);
        }
        per_class.insert(
            class,
            ClassScores {
                precision,
                recall,
                f1,
                support,
                predicted,
            },
        );
    }
    let macro_f1 = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    F1Report {
        per_class,
        macro_f1,
    }
}

pub fn eval_f1(predicted: &[ArgumentLabel], gold: &[ArgumentLabel]) -> Result<F1Report> {
    Ok(f1_from_pairs(&aligned(predicted, gold)?))
}

fn kappa_from_pairs(pairs: &[(Stance, Stance)]) -> f64 {
    let n = pairs.len() as f64;
    if pairs.is_empty() {
        return 1.0;
    }
    let observed = pairs.iter().filter(|(a, b)| a == b).count() as f64 / n;
    let expected: f64 = Stance::ALL
        .iter()
        .map(|&c| {
            let pa = pairs.iter().filter(|(a, _)| *a == c).count() as f64 / n;
            let pb = pairs.iter().filter(|(_, b)| *b == c).count() as f64 / n;
            pa * pb
        })
        .sum();
    if (1.0 - expected).abs() < f64::EPSILON {
        1.0
    } else {
        (observed - expected) / (1.0 - expected)
    }
}

/// Cohen's kappa over the three stance classes. Two identical constant
/// labelings have chance agreement 1 and are defined to score 1.
pub fn eval_kappa(a: &[ArgumentLabel], b: &[ArgumentLabel]) -> Result<f64> {
    Ok(kappa_from_pairs(&aligned(a, b)?))
}

/// Percentile bootstrap interval for macro F1.
pub fn bootstrap_macro_f1(
    predicted: &[ArgumentLabel],
    gold: &[ArgumentLabel],
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let pairs = aligned(predicted, gold)?;
    if pairs.is_empty() || resamples == 0 {
        return Err(Error::Invalid(
            "bootstrap needs labels and resamples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let sample: Vec<_> = (0..pairs.len())
                .map(|_| pairs[rng.gen_range(0..pairs.len())])
                .collect();
            f1_from_pairs(&sample).macro_f1
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence.clamp(0.0, 1.0)) / 2.0;
    let at = |q: f64| stats[((q * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
    Ok((at(tail), at(1.0 - tail)))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn labels(stances: &[Stance]) -> Vec<ArgumentLabel> {
        stances
            .iter()
            .enumerate()
            .map(|(i, &stance)| ArgumentLabel {
                post_id: format!("p{i:03}"),
                aspect: stance.is_argument().then(|| "GMO".to_string()),
                stance,
                confidence: 1.0,
                backend_id: "test".into(),
            })
            .collect()
    }

    use Stance::{Against as A, For as F, None as N};

    #[test]
    fn identity_is_perfect() {
        let x = labels(&[N, F, A, F, N]);
        assert_eq!(eval_f1(&x, &x).unwrap().macro_f1, 1.0);
        assert_eq!(eval_kappa(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn all_none_against_split_gold() {
        let pred = labels(&[N, N, N, N]);
        let gold = labels(&[F, F, A, A]);
        assert_eq!(eval_f1(&pred, &gold).unwrap().macro_f1, 0.0);
    }

    #[test]
    fn absent_class_excluded_from_macro() {
        let x = labels(&[F, F, N]);
        let r = eval_f1(&x, &x).unwrap();
        assert_eq!(r.per_class[&A].f1, 0.0);
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn kappa_two_class_fixture() {
        // 14 of 20 agree, both raters split 10/10 -> p_o = 0.7, p_e = 0.5
        let mut a = vec![F; 10];
        a.extend([A; 10]);
        let mut b = vec![F; 7];
        b.extend([A; 3]);
        b.extend([F; 3]);
        b.extend([A; 7]);
        let k = eval_kappa(&labels(&a), &labels(&b)).unwrap();
        assert!((k - 0.4).abs() < 1e-9);
    }

    #[test]
    fn constant_identical_raters() {
        let x = labels(&[N, N, N]);
        assert_eq!(eval_kappa(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn mismatched_ids_rejected() {
        let a = labels(&[N, F]);
        let b = labels(&[N]);
        assert!(eval_f1(&a, &b).is_err());
        assert!(eval_kappa(&a, &b).is_err());
    }

    #[test]
    fn bootstrap_is_seeded() {
        let pred = labels(&[N, F, A, F, N, A, F, N]);
        let gold = labels(&[N, F, F, F, A, A, F, N]);
        let a = bootstrap_macro_f1(&pred, &gold, 200, 0.95, 7).unwrap();
        let b = bootstrap_macro_f1(&pred, &gold, 200, 0.95, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.0 <= a.1);
    }
}
