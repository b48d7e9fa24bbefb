//! Variety ranking with a modified BM25 score.
//!
//! Each variety is treated as one document: the bag of words of all its
//! training products, with `Y[i, w]` occurrences of word `w`. Query words are
//! unique, so the query term frequency is fixed to 1 and the score of
//! variety `i` for a product word set `P` is
//!
//! ```text
//! sum over w in P present in variety i of
//!     (k + 1) / (1 + k (1 - b + b |v_i| / avvl)) * ln((N + 1) / (vf(w) + 1))
//! ```
//!
//! where `|v_i|` is the variety's total word count, `avvl` the mean of those
//! totals, `N` the number of varieties and `vf(w)` the number of varieties
//! containing `w`. The natural log is used; any other base rescales every
//! score by the same factor and leaves rankings unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::RankedPrediction;
use crate::vectorize::VarietyMatrix;

pub const DEFAULT_K: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    k: f64,
    b: f64,
    n_varieties: usize,
    /// Per word: (variety, count) for every variety with a non-zero count.
    postings: Vec<Vec<(u32, u32)>>,
    totals: Vec<u64>,
    avvl: f64,
}

impl ScoreModel {
    pub fn fit(y: &VarietyMatrix) -> Result<Self> {
        Self::with_params(y, DEFAULT_K, DEFAULT_B)
    }

    pub fn with_params(y: &VarietyMatrix, k: f64, b: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) || !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidParameter(format!(
                "BM25 parameters k={k}, b={b} out of range"
            )));
        }
        let n = y.n_varieties();
        let mut postings = vec![Vec::new(); y.n_cols()];
        for i in 0..n {
            for (j, &c) in y.row(i).iter().enumerate() {
                if c > 0 {
                    postings[j].push((i as u32, c));
                }
            }
        }
        let totals: Vec<u64> = (0..n).map(|i| y.total(i)).collect();
        if totals.iter().all(|&t| t == 0) {
            return Err(Error::Empty("variety matrix (all counts zero)"));
        }
        Ok(Self {
            k,
            b,
            n_varieties: n,
            postings,
            totals,
            avvl: y.avvl(),
        })
    }

    /// Checks invariants of a deserialized model.
    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.n_varieties;
        let sorted = self.postings.iter().all(|p| {
            p.windows(2).all(|w| w[0].0 < w[1].0) && p.iter().all(|&(v, c)| (v as usize) < n && c > 0)
        });
        let ok = sorted
            && n > 0
            && self.totals.len() == n
            && self.avvl.is_finite()
            && self.avvl > 0.0
            && self.k.is_finite()
            && self.k >= 0.0
            && (0.0..=1.0).contains(&self.b);
        if ok {
            Ok(())
        } else {
            Err(Error::ModelFormat("inconsistent BM25 model".into()))
        }
    }

    pub fn n_varieties(&self) -> usize {
        self.n_varieties
    }

    pub fn n_words(&self) -> usize {
        self.postings.len()
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn avvl(&self) -> f64 {
        self.avvl
    }

    pub fn total(&self, variety: usize) -> u64 {
        self.totals[variety]
    }

    /// Number of varieties containing word column `w`.
    pub fn vf(&self, w: usize) -> usize {
        self.postings[w].len()
    }

    fn idf(&self, w: usize) -> f64 {
        ((self.n_varieties as f64 + 1.0) / (self.vf(w) as f64 + 1.0)).ln()
    }

    fn length_factor(&self, variety: usize) -> f64 {
        let rel = self.totals[variety] as f64 / self.avvl;
        (self.k + 1.0) / (1.0 + self.k * (1.0 - self.b + self.b * rel))
    }

    /// Score of one variety for a set of word columns. Columns outside the
    /// fitted vocabulary contribute nothing; duplicates are counted once.
    pub fn score_variety(&self, words: &[usize], variety: usize) -> Result<f64> {
        if variety >= self.n_varieties {
            return Err(Error::InvalidParameter(format!(
                "variety {variety} outside 0..{}",
                self.n_varieties
            )));
        }
        let mut words: Vec<usize> = words.iter().copied().filter(|&w| w < self.n_words()).collect();
        words.sort_unstable();
        words.dedup();
        let factor = self.length_factor(variety);
        Ok(words
            .into_iter()
            .filter(|&w| {
                self.postings[w]
                    .binary_search_by_key(&(variety as u32), |p| p.0)
                    .is_ok()
            })
            .map(|w| factor * self.idf(w))
            .sum())
    }

    /// Scores for every variety at once.
    pub fn scores(&self, words: &[usize]) -> Vec<f64> {
        let mut words: Vec<usize> = words.iter().copied().filter(|&w| w < self.n_words()).collect();
        words.sort_unstable();
        words.dedup();
        let mut idf_sum = vec![0.0; self.n_varieties];
        for w in words {
            let idf = self.idf(w);
            for &(v, _) in &self.postings[w] {
                idf_sum[v as usize] += idf;
            }
        }
        idf_sum
            .iter()
            .enumerate()
            .map(|(v, s)| if *s == 0.0 { 0.0 } else { self.length_factor(v) * s })
            .collect()
    }

    /// Every variety by descending score, ties by ascending id.
    pub fn rank_varieties(&self, words: &[usize]) -> RankedPrediction {
        RankedPrediction::from_scores(&self.scores(words))
    }

    /// Unmodified Okapi BM25 (raw term counts, `+0.5` smoothing in the log
    /// term). Only used as a reference point in tests.
    #[cfg(any(test, feature = "okapi"))]
    pub fn okapi_score(&self, words: &[usize], variety: usize) -> f64 {
        let mut words: Vec<usize> = words.iter().copied().filter(|&w| w < self.n_words()).collect();
        words.sort_unstable();
        words.dedup();
        let norm = 1.0 - self.b + self.b * self.totals[variety] as f64 / self.avvl;
        let n = self.n_varieties as f64;
        words
            .into_iter()
            .filter_map(|w| {
                let p = &self.postings[w];
                let c = p.iter().find(|e| e.0 as usize == variety)?.1 as f64;
                let df = p.len() as f64;
                Some((self.k + 1.0) * c / (c + self.k * norm) * ((n - df + 0.5) / (df + 0.5)).ln())
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(n: usize, cols: usize, counts: Vec<u32>) -> ScoreModel {
        ScoreModel::fit(&VarietyMatrix::from_counts(n, cols, counts).unwrap()).unwrap()
    }

    #[test]
    fn vf_counts_varieties() {
        let m = model(2, 2, vec![3, 1, 2, 0]);
        assert_eq!(m.vf(0), 2);
        assert_eq!(m.vf(1), 1);
    }

    #[test]
    fn single_variety() {
        let m = model(1, 3, vec![1, 2, 0]);
        assert_eq!(m.n_varieties(), 1);
        assert_eq!(m.avvl(), 3.0);
    }

    #[test]
    fn all_zero_rejected() {
        let y = VarietyMatrix::from_counts(2, 2, vec![0; 4]).unwrap();
        assert!(ScoreModel::fit(&y).is_err());
    }

    #[test]
    fn empty_intersection_scores_zero() {
        let m = model(2, 3, vec![1, 0, 0, 0, 1, 0]);
        assert_eq!(m.score_variety(&[2], 0).unwrap(), 0.0);
        assert_eq!(m.score_variety(&[], 1).unwrap(), 0.0);
    }

    #[test]
    fn length_factor_cancels_at_average() {
        // two varieties of equal size, word 0 only in variety 0
        let m = model(2, 2, vec![1, 0, 0, 1]);
        let s = m.score_variety(&[0], 0).unwrap();
        assert!((s - (3.0f64 / 2.0).ln()).abs() < 1e-12);
        assert!((s - 0.405_465).abs() < 1e-6);
    }

    #[test]
    fn ubiquitous_word_contributes_nothing() {
        let m = model(3, 2, vec![1, 1, 2, 0, 5, 0]);
        for v in 0..3 {
            assert_eq!(m.score_variety(&[0], v).unwrap(), 0.0);
        }
    }

    #[test]
    fn unknown_variety_rejected() {
        let m = model(2, 1, vec![1, 1]);
        assert!(m.score_variety(&[0], 2).is_err());
    }

    #[test]
    fn empty_query_gives_id_order() {
        let m = model(3, 1, vec![1, 0, 1]);
        let r = m.rank_varieties(&[]);
        let ids: Vec<_> = r.entries().iter().map(|e| e.variety).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert!(r.entries().iter().all(|e| e.score == 0.0));
    }

    #[test]
    fn okapi_reference_differs_from_modified() {
        let m = model(3, 2, vec![2, 0, 0, 1, 1, 1]);
        let okapi = m.okapi_score(&[0], 0);
        let modified = m.score_variety(&[0], 0).unwrap();
        assert!(okapi.is_finite() && modified > 0.0);
        assert!((okapi - modified).abs() > 1e-6);
    }

    fn counts_strategy() -> impl Strategy<Value = (usize, usize, Vec<u32>)> {
        (1usize..5, 1usize..7).prop_flat_map(|(n, c)| {
            (Just(n), Just(c), proptest::collection::vec(0u32..4, n * c))
                .prop_filter("some count", |(_, _, v)| v.iter().any(|&x| x > 0))
        })
    }

    proptest! {
        #[test]
        fn scores_nonnegative_and_additive(
            (n, c, counts) in counts_strategy(),
            split in proptest::collection::vec(proptest::bool::ANY, 7),
        ) {
            let m = model(n, c, counts);
            let all: Vec<usize> = (0..c).collect();
            let left: Vec<usize> = all.iter().copied().filter(|&w| split[w]).collect();
            let right: Vec<usize> = all.iter().copied().filter(|&w| !split[w]).collect();
            for v in 0..n {
                let s = m.score_variety(&all, v).unwrap();
                prop_assert!(s >= 0.0);
                let parts = m.score_variety(&left, v).unwrap() + m.score_variety(&right, v).unwrap();
                prop_assert!((s - parts).abs() < 1e-9);
                // a column unseen at fit time changes nothing
                let mut extended = all.clone();
                extended.push(c + 3);
                prop_assert_eq!(m.score_variety(&extended, v).unwrap(), s);
                prop_assert!((m.scores(&all)[v] - s).abs() < 1e-12);
            }
        }

        #[test]
        fn ranking_invariant_under_rescaling(
            (n, c, counts) in counts_strategy(),
            factor in 0.01f64..100.0,
        ) {
            let m = model(n, c, counts);
            let all: Vec<usize> = (0..c).collect();
            let scores = m.scores(&all);
            let scaled: Vec<f64> = scores.iter().map(|s| s * factor).collect();
            let a: Vec<usize> = RankedPrediction::from_scores(&scores).entries().iter().map(|e| e.variety).collect();
            let b: Vec<usize> = RankedPrediction::from_scores(&scaled).entries().iter().map(|e| e.variety).collect();
            prop_assert_eq!(a, b);
        }
    }
}
