//! Train/test splitting and Top-k quality measures.
//!
//! For Top-k with k > 1 the effective prediction of a sample is its true
//! variety when that variety is among the first k ranked, and the first
//! ranked variety otherwise ([`TopkRule::Collapse`]). Confusion counts are
//! then taken one-vs-rest per variety.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::RankedPrediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub ratio: f64,
    pub seed: u64,
    /// Ascending row indices.
    pub train: Vec<usize>,
    /// Ascending row indices.
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and puts the first `round(ratio·n)` rows in
/// the training partition.
pub fn split_dataset(n: usize, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split ratio {ratio} must lie strictly between 0 and 1"
        )));
    }
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidParameter(format!(
            "split of {n} rows at ratio {ratio} leaves a partition empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        ratio,
        seed,
        train,
        test,
    })
}

pub fn topk_hit(pred: &RankedPrediction, truth: usize, k: usize) -> bool {
    pred.contains_in_top(truth, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TopkRule {
    /// A Top-k hit counts as predicting the truth; a miss as predicting C1.
    #[default]
    Collapse,
    /// Always the first-ranked variety, whatever k is.
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p == r {
        // 2pp/(2p) can round away from p
        p
    } else if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// One-vs-rest counts for every variety. `None` predictions (empty
/// rankings) count as a miss for the truth and a prediction of nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    classes: Vec<ClassCounts>,
}

impl ConfusionCounts {
    pub fn from_predictions(predicted: &[Option<usize>], truths: &[usize], n_classes: usize) -> Self {
        let n = truths.len() as u64;
        let mut classes = vec![ClassCounts::default(); n_classes];
        for (p, &t) in predicted.iter().zip(truths) {
            match *p {
                Some(p) if p == t => classes[t].tp += 1,
                Some(p) => {
                    classes[t].fn_ += 1;
                    if p < n_classes {
                        classes[p].fp += 1;
                    }
                }
                None => classes[t].fn_ += 1,
            }
        }
        for c in &mut classes {
            c.tn = n - c.tp - c.fp - c.fn_;
        }
        Self { classes }
    }

    pub fn classes(&self) -> &[ClassCounts] {
        &self.classes
    }

    pub fn pooled(&self) -> ClassCounts {
        self.classes.iter().fold(ClassCounts::default(), |a, c| ClassCounts {
            tp: a.tp + c.tp,
            tn: a.tn + c.tn,
            fp: a.fp + c.fp,
            fn_: a.fn_ + c.fn_,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub k: usize,
    pub averaging: Averaging,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Quality of `preds` against `truths` for the Top-`k` regime.
pub fn evaluate_classifier(
    preds: &[RankedPrediction],
    truths: &[usize],
    k: usize,
    averaging: Averaging,
    rule: TopkRule,
) -> Result<Metrics> {
    if preds.len() != truths.len() {
        return Err(Error::Dimension {
            expected: truths.len(),
            got: preds.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("Top-k needs k >= 1".into()));
    }
    let n_classes = truths
        .iter()
        .copied()
        .chain(preds.iter().flat_map(|p| p.entries().iter().map(|e| e.variety)))
        .max()
        .map_or(0, |m| m + 1);
    let mut hits = 0usize;
    let effective: Vec<Option<usize>> = preds
        .iter()
        .zip(truths)
        .map(|(p, &t)| {
            let hit = topk_hit(p, t, k);
            hits += usize::from(hit);
            match rule {
                TopkRule::Collapse if hit => Some(t),
                _ => p.first(),
            }
        })
        .collect();
    let counts = ConfusionCounts::from_predictions(&effective, truths, n_classes);
    let accuracy = hits as f64 / truths.len() as f64;
    let (precision, recall) = match averaging {
        Averaging::Micro => {
            let c = counts.pooled();
            (c.precision(), c.recall())
        }
        Averaging::Macro => {
            let mut present = vec![false; n_classes];
            truths.iter().for_each(|&t| present[t] = true);
            let used: Vec<&ClassCounts> = counts
                .classes()
                .iter()
                .zip(&present)
                .filter_map(|(c, &p)| p.then_some(c))
                .collect();
            let n = used.len() as f64;
            (
                used.iter().map(|c| c.precision()).sum::<f64>() / n,
                used.iter().map(|c| c.recall()).sum::<f64>() / n,
            )
        }
    };
    Ok(Metrics {
        k,
        averaging,
        accuracy,
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(ids: &[usize]) -> RankedPrediction {
        let n = ids.iter().max().map_or(0, |m| m + 1);
        let mut scores = vec![0.0; n];
        for (pos, &id) in ids.iter().enumerate() {
            scores[id] = (ids.len() - pos) as f64;
        }
        RankedPrediction::from_positive_scores(&scores)
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split_dataset(100, 0.9, 5).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (90, 10));
        assert_eq!(s, split_dataset(100, 0.9, 5).unwrap());
        assert_ne!(s.test, split_dataset(100, 0.9, 6).unwrap().test);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_empty_partitions() {
        assert!(split_dataset(3, 0.9, 0).is_err());
        assert!(split_dataset(10, 1.0, 0).is_err());
        assert!(split_dataset(10, 0.0, 0).is_err());
        assert!(split_dataset(0, 0.5, 0).is_err());
    }

    #[test]
    fn topk_membership() {
        let p = ranked(&[4, 1, 3]);
        assert!((1..=3).all(|k| topk_hit(&p, 4, k)));
        assert!(!topk_hit(&p, 3, 1) && !topk_hit(&p, 3, 2) && topk_hit(&p, 3, 3));
        assert!(!topk_hit(&p, 0, 3));
        assert!(topk_hit(&ranked(&[2]), 2, 3));
    }

    #[test]
    fn perfect_predictions() {
        let preds: Vec<_> = [0, 1, 2, 1].iter().map(|&t| ranked(&[t])).collect();
        for avg in [Averaging::Macro, Averaging::Micro] {
            let m = evaluate_classifier(&preds, &[0, 1, 2, 1], 1, avg, TopkRule::Collapse).unwrap();
            assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn collapse_rule() {
        let preds = vec![ranked(&[1, 0]), ranked(&[1, 2])];
        let truths = [0, 0];
        let m2 = evaluate_classifier(&preds, &truths, 2, Averaging::Micro, TopkRule::Collapse).unwrap();
        assert_eq!(m2.accuracy, 0.5);
        // effective predictions [0, 1]: one TP, one FN for class 0, one FP for class 1
        assert_eq!(m2.precision, 0.5);
        let first = evaluate_classifier(&preds, &truths, 2, Averaging::Micro, TopkRule::First).unwrap();
        assert_eq!((first.accuracy, first.precision), (0.5, 0.0));
    }

    #[test]
    fn counts_cover_every_sample() {
        let c = ConfusionCounts::from_predictions(&[Some(0), Some(2), None, Some(1)], &[0, 1, 1, 1], 3);
        for k in c.classes() {
            assert_eq!(k.total(), 4);
        }
        assert_eq!(c.classes()[1], ClassCounts { tp: 1, tn: 1, fp: 0, fn_: 2 });
        assert_eq!(c.classes()[2], ClassCounts { tp: 0, tn: 3, fp: 1, fn_: 0 });
    }

    #[test]
    fn absent_classes_excluded_from_macro() {
        // class 2 is only ever predicted, never true
        let preds = vec![ranked(&[0]), ranked(&[2])];
        let m = evaluate_classifier(&preds, &[0, 1], 1, Averaging::Macro, TopkRule::Collapse).unwrap();
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 0.5);
    }

    #[test]
    fn shape_errors() {
        assert!(evaluate_classifier(&[], &[], 1, Averaging::Macro, TopkRule::Collapse).is_err());
        assert!(evaluate_classifier(&[ranked(&[0])], &[0, 1], 1, Averaging::Macro, TopkRule::Collapse).is_err());
        assert!(evaluate_classifier(&[ranked(&[0])], &[0], 0, Averaging::Macro, TopkRule::Collapse).is_err());
    }
}
