use serde::{Deserialize, Serialize};

/// One scored variety in a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub variety: usize,
    pub score: f64,
}

/// Varieties ordered from most to least likely.
///
/// Scores never increase along the list and every variety appears at most
/// once. How equal scores are ordered is decided by the producing classifier;
/// [`RankedPrediction::from_scores`] breaks ties by ascending variety id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    entries: Vec<Scored>,
}

impl RankedPrediction {
    /// Ranks every variety by descending score, ties by ascending id.
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut entries: Vec<Scored> = scores
            .iter()
            .enumerate()
            .map(|(variety, &score)| Scored { variety, score })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.variety.cmp(&b.variety)));
        Self { entries }
    }

    /// Like [`from_scores`](Self::from_scores) but keeps only strictly positive scores.
    pub fn from_positive_scores(scores: &[f64]) -> Self {
        let mut ranked = Self::from_scores(scores);
        ranked.entries.retain(|e| e.score > 0.0);
        ranked
    }

    /// Takes an already ordered list. Panics in debug builds if the order is broken.
    pub fn from_ordered(entries: Vec<Scored>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].score >= w[1].score));
        debug_assert!({
            let mut ids: Vec<_> = entries.iter().map(|e| e.variety).collect();
            ids.sort_unstable();
            ids.windows(2).all(|w| w[0] != w[1])
        });
        Self { entries }
    }

    /// Id-order ranking with zero scores, used when a product has no usable words.
    pub fn uniform(n_varieties: usize) -> Self {
        Self::from_scores(&vec![0.0; n_varieties])
    }

    pub fn entries(&self) -> &[Scored] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first(&self) -> Option<usize> {
        self.entries.first().map(|e| e.variety)
    }

    /// The `k` best varieties, or all of them if fewer are ranked.
    pub fn top(&self, k: usize) -> &[Scored] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn contains_in_top(&self, variety: usize, k: usize) -> bool {
        self.top(k).iter().any(|e| e.variety == variety)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_fall_back_to_id_order() {
        let r = RankedPrediction::from_scores(&[1.0, 2.0, 2.0, 0.5]);
        let ids: Vec<_> = r.entries().iter().map(|e| e.variety).collect();
        assert_eq!(ids, vec![1, 2, 0, 3]);
    }

    #[test]
    fn top_sets_are_nested() {
        let r = RankedPrediction::from_scores(&[0.1, 0.7, 0.2]);
        assert_eq!(r.top(1).len(), 1);
        assert_eq!(r.top(5).len(), 3);
        for k in 1..3 {
            for e in r.top(k) {
                assert!(r.contains_in_top(e.variety, k + 1));
            }
        }
    }

    #[test]
    fn positive_filter_drops_zeros() {
        let r = RankedPrediction::from_positive_scores(&[0.0, 1.0, 0.0]);
        assert_eq!(r.len(), 1);
        assert_eq!(r.first(), Some(1));
    }
}
