//! Exact-scan KNN and fuzzy KNN over reduced product vectors.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ranking::{RankedPrediction, Scored};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Spearman,
    Cosine,
    Correlation,
    Euclidean,
    Cityblock,
    Chebychev,
    Hamming,
    Jaccard,
    Seuclidean,
}

impl MetricKind {
    /// All metrics, in the order the tuning grid reports them.
    pub const ALL: [MetricKind; 9] = [
        MetricKind::Spearman,
        MetricKind::Cosine,
        MetricKind::Correlation,
        MetricKind::Euclidean,
        MetricKind::Cityblock,
        MetricKind::Chebychev,
        MetricKind::Hamming,
        MetricKind::Jaccard,
        MetricKind::Seuclidean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Spearman => "spearman",
            MetricKind::Cosine => "cosine",
            MetricKind::Correlation => "correlation",
            MetricKind::Euclidean => "euclidean",
            MetricKind::Cityblock => "cityblock",
            MetricKind::Chebychev => "chebychev",
            MetricKind::Hamming => "hamming",
            MetricKind::Jaccard => "jaccard",
            MetricKind::Seuclidean => "seuclidean",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown distance metric {s:?}; expected one of {}",
                    MetricKind::ALL.map(MetricKind::name).join(", ")
                ))
            })
    }
}

/// A distance measure, with per-dimension weights for `seuclidean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMetric {
    kind: MetricKind,
    /// `1 / s_i²` per dimension for seuclidean, zero where `s_i = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inv_var: Option<Vec<f64>>,
}

impl DistanceMetric {
    /// A metric that needs no fitted state. Seuclidean built this way uses
    /// unit weights, which makes it equal to euclidean.
    pub fn new(kind: MetricKind) -> Self {
        Self {
            kind,
            inv_var: None,
        }
    }

    /// Fits seuclidean's per-dimension sample variances on `train`; other
    /// kinds ignore the data.
    pub fn fit(kind: MetricKind, train: &Matrix) -> Self {
        if kind != MetricKind::Seuclidean {
            return Self::new(kind);
        }
        let (m, n) = (train.rows(), train.cols());
        let mut inv_var = vec![0.0; n];
        if m > 1 {
            for (j, w) in inv_var.iter_mut().enumerate() {
                let mean = (0..m).map(|i| train.get(i, j)).sum::<f64>() / m as f64;
                let var = (0..m)
                    .map(|i| (train.get(i, j) - mean).powi(2))
                    .sum::<f64>()
                    / (m - 1) as f64;
                *w = if var > 0.0 { 1.0 / var } else { 0.0 };
            }
        }
        Self {
            kind,
            inv_var: Some(inv_var),
        }
    }

    /// Seuclidean with explicit standard deviations.
    pub fn seuclidean(stds: &[f64]) -> Self {
        Self {
            kind: MetricKind::Seuclidean,
            inv_var: Some(
                stds.iter()
                    .map(|&s| if s > 0.0 { 1.0 / (s * s) } else { 0.0 })
                    .collect(),
            ),
        }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    /// Per-vector preparation shared by all comparisons: fractional ranks
    /// for spearman, the vector itself otherwise.
    pub fn prepare<'a>(&self, v: &'a [f64]) -> Cow<'a, [f64]> {
        match self.kind {
            MetricKind::Spearman => Cow::Owned(fractional_ranks(v)),
            _ => Cow::Borrowed(v),
        }
    }

    /// Distance between two vectors already passed through [`prepare`](Self::prepare).
    pub fn between_prepared(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            MetricKind::Cityblock => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            MetricKind::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            MetricKind::Seuclidean => match &self.inv_var {
                Some(w) => a
                    .iter()
                    .zip(b)
                    .zip(w)
                    .map(|((x, y), w)| w * (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt(),
                None => a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt(),
            },
            MetricKind::Chebychev => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            MetricKind::Hamming => {
                let differ = a.iter().zip(b).filter(|(x, y)| x != y).count();
                differ as f64 / a.len().max(1) as f64
            }
            MetricKind::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0)
                }
            }
            MetricKind::Correlation | MetricKind::Spearman => correlation_distance(a, b),
            MetricKind::Jaccard => {
                // Positive and negative parts are compared as separate
                // coordinates so signed inputs stay in [0, 1].
                let (mut lo, mut hi) = (0.0, 0.0);
                for (&x, &y) in a.iter().zip(b) {
                    let (xp, xn) = (x.max(0.0), (-x).max(0.0));
                    let (yp, yn) = (y.max(0.0), (-y).max(0.0));
                    lo += xp.min(yp) + xn.min(yn);
                    hi += xp.max(yp) + xn.max(yn);
                }
                if hi == 0.0 {
                    0.0
                } else {
                    (1.0 - lo / hi).clamp(0.0, 1.0)
                }
            }
        }
    }
}

/// Distance between `a` and `b` under `metric`.
pub fn distance(a: &[f64], b: &[f64], metric: &DistanceMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if let Some(w) = &metric.inv_var {
        if w.len() != a.len() {
            return Err(Error::Dimension {
                expected: w.len(),
                got: a.len(),
            });
        }
    }
    Ok(metric.between_prepared(&metric.prepare(a), &metric.prepare(b)))
}

fn correlation_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 1.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        1.0
    } else {
        (1.0 - sab / (saa.sqrt() * sbb.sqrt())).clamp(0.0, 2.0)
    }
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]).then(i.cmp(&j)));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Training rows with the metric's per-row preparation cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborIndex {
    train: Matrix,
    labels: Vec<usize>,
    n_varieties: usize,
    metric: DistanceMetric,
    #[serde(skip)]
    prepared: Option<Matrix>,
}

impl NeighborIndex {
    pub fn new(
        train: Matrix,
        labels: Vec<usize>,
        n_varieties: usize,
        metric: DistanceMetric,
    ) -> Result<Self> {
        if train.rows() != labels.len() {
            return Err(Error::Dimension {
                expected: train.rows(),
                got: labels.len(),
            });
        }
        if train.rows() == 0 {
            return Err(Error::Empty("training set"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_varieties) {
            return Err(Error::InvalidParameter(format!(
                "label {l} outside 0..{n_varieties}"
            )));
        }
        if !train.is_finite() {
            return Err(Error::Numeric("non-finite training feature".into()));
        }
        if let Some(w) = &metric.inv_var {
            if w.len() != train.cols() {
                return Err(Error::Dimension {
                    expected: train.cols(),
                    got: w.len(),
                });
            }
        }
        let mut index = Self {
            train,
            labels,
            n_varieties,
            metric,
            prepared: None,
        };
        index.prepare();
        Ok(index)
    }

    fn prepare(&mut self) {
        if self.metric.kind == MetricKind::Spearman {
            let rows: Vec<Vec<f64>> = self
                .train
                .iter_rows()
                .map(|r| self.metric.prepare(r).into_owned())
                .collect();
            self.prepared = Some(Matrix::from_rows(&rows).expect("equal widths"));
        }
    }

    /// Restores caches skipped by serialization.
    pub(crate) fn rebuild(&mut self) {
        self.prepare();
    }

    /// Checks invariants of a deserialized index.
    pub(crate) fn validate(&self) -> Result<()> {
        let ok = self.train.rows() == self.labels.len()
            && self.train.rows() > 0
            && self.train.as_slice().len() == self.train.rows() * self.train.cols()
            && self.labels.iter().all(|&l| l < self.n_varieties)
            && self.train.is_finite()
            && self.metric.inv_var.as_ref().is_none_or(|w| {
                self.metric.kind == MetricKind::Seuclidean
                    && w.len() == self.train.cols()
                    && w.iter().all(|v| v.is_finite() && *v >= 0.0)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::ModelFormat("inconsistent neighbor index".into()))
        }
    }

    pub fn len(&self) -> usize {
        self.train.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.train.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.train.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_varieties(&self) -> usize {
        self.n_varieties
    }

    pub fn metric(&self) -> &DistanceMetric {
        &self.metric
    }

    pub fn train(&self) -> &Matrix {
        &self.train
    }

    fn prepared_row(&self, i: usize) -> &[f64] {
        match &self.prepared {
            Some(p) => p.row(i),
            None => self.train.row(i),
        }
    }

    fn check_query(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// The `k` nearest rows to `q`, ordered by (distance, row index).
    pub fn nearest(&self, q: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        self.check_query(q)?;
        let pq = self.metric.prepare(q);
        let all: Vec<Neighbor> = (0..self.len())
            .map(|i| Neighbor {
                index: i,
                distance: self.metric.between_prepared(&pq, self.prepared_row(i)),
            })
            .collect();
        Ok(select_nearest(all, k))
    }

    /// The `k` nearest other training rows to training row `i`.
    pub fn nearest_to_member(&self, i: usize, k: usize) -> Vec<Neighbor> {
        let pi = self.prepared_row(i);
        let all: Vec<Neighbor> = (0..self.len())
            .filter(|&j| j != i)
            .map(|j| Neighbor {
                index: j,
                distance: self.metric.between_prepared(pi, self.prepared_row(j)),
            })
            .collect();
        select_nearest(all, k)
    }
}

fn neighbor_order(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.index.cmp(&b.index))
}

fn select_nearest(mut all: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    let k = k.min(all.len());
    if k == 0 {
        return Vec::new();
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, neighbor_order);
        all.truncate(k);
    }
    all.sort_by(neighbor_order);
    all
}

/// Majority vote over an ordered neighbor list. Varieties with equal votes
/// are ordered by their closest neighbor. Scores are vote fractions.
pub fn vote_ranking(neighbors: &[Neighbor], labels: &[usize]) -> RankedPrediction {
    // (variety, votes, position of its closest neighbor)
    let mut tally: Vec<(usize, usize, usize)> = Vec::new();
    for (pos, n) in neighbors.iter().enumerate() {
        let v = labels[n.index];
        match tally.iter_mut().find(|t| t.0 == v) {
            Some(t) => t.1 += 1,
            None => tally.push((v, 1, pos)),
        }
    }
    tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let k = neighbors.len().max(1) as f64;
    RankedPrediction::from_ordered(
        tally
            .into_iter()
            .map(|(variety, votes, _)| Scored {
                variety,
                score: votes as f64 / k,
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    index: NeighborIndex,
    k: usize,
}

impl KnnModel {
    pub fn fit(
        train: Matrix,
        labels: Vec<usize>,
        n_varieties: usize,
        k: usize,
        metric: MetricKind,
    ) -> Result<Self> {
        let metric = DistanceMetric::fit(metric, &train);
        Self::from_index(NeighborIndex::new(train, labels, n_varieties, metric)?, k)
    }

    pub fn from_index(index: NeighborIndex, k: usize) -> Result<Self> {
        if k == 0 || k > index.len() {
            return Err(Error::InvalidParameter(format!(
                "k = {k} must lie in 1..={}",
                index.len()
            )));
        }
        Ok(Self { index, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    pub(crate) fn rebuild(&mut self) {
        self.index.rebuild();
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.index.validate()?;
        if self.k == 0 || self.k > self.index.len() {
            return Err(Error::ModelFormat(format!("k = {} out of range", self.k)));
        }
        Ok(())
    }

    pub fn predict(&self, q: &[f64]) -> Result<RankedPrediction> {
        let nn = self.index.nearest(q, self.k)?;
        Ok(vote_ranking(&nn, self.index.labels()))
    }

    pub fn predict_batch(&self, queries: &Matrix) -> Result<Vec<RankedPrediction>> {
        (0..queries.rows())
            .into_par_iter()
            .map(|i| self.predict(queries.row(i)))
            .collect()
    }
}

/// How training memberships are initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum MembershipInit {
    /// One-hot on the sample's own variety.
    Crisp,
    /// Keller et al. style: 0.51 + 0.49·n_j/K for the own class, 0.49·n_j/K
    /// for others, counted over the K nearest other training samples.
    Keller { neighbors: usize },
}

/// Membership matrix `U` (`m × V`), rows summing to one.
pub fn fknn_init_memberships(
    index: &NeighborIndex,
    init: MembershipInit,
) -> Result<Matrix> {
    let (m, v) = (index.len(), index.n_varieties());
    let labels = index.labels();
    match init {
        MembershipInit::Crisp => {
            let mut u = Matrix::zeros(m, v);
            for (i, &l) in labels.iter().enumerate() {
                u.set(i, l, 1.0);
            }
            Ok(u)
        }
        MembershipInit::Keller { neighbors } => {
            if neighbors == 0 || neighbors >= m {
                return Err(Error::InvalidParameter(format!(
                    "membership neighbor count {neighbors} must lie in 1..{m}"
                )));
            }
            let lists: Vec<Vec<Neighbor>> = (0..m)
                .into_par_iter()
                .map(|i| index.nearest_to_member(i, neighbors))
                .collect();
            Ok(keller_memberships(&lists, labels, neighbors, v))
        }
    }
}

/// Keller initialisation from precomputed neighbor lists (each at least
/// `k_init` long, excluding the sample itself).
pub fn keller_memberships(
    lists: &[Vec<Neighbor>],
    labels: &[usize],
    k_init: usize,
    n_varieties: usize,
) -> Matrix {
    let mut u = Matrix::zeros(lists.len(), n_varieties);
    for (i, list) in lists.iter().enumerate() {
        let row = u.row_mut(i);
        for n in &list[..k_init] {
            row[labels[n.index]] += 1.0;
        }
        for (j, r) in row.iter_mut().enumerate() {
            let share = 0.49 * *r / k_init as f64;
            *r = if j == labels[i] { 0.51 + share } else { share };
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|r| *r /= total);
    }
    u
}

/// Class scores of a query from its ordered neighbors. An exact match
/// copies the membership row of the first zero-distance neighbor.
pub fn fuzzy_scores(neighbors: &[Neighbor], memberships: &Matrix, fuzzifier: f64) -> Vec<f64> {
    let v = memberships.cols();
    if let Some(hit) = neighbors.iter().find(|n| n.distance == 0.0) {
        return memberships.row(hit.index).to_vec();
    }
    if neighbors.is_empty() {
        return vec![0.0; v];
    }
    // weights 1 / d^(2/(fm-1)), computed relative to the largest one
    let exponent = 2.0 / (fuzzifier - 1.0);
    let logs: Vec<f64> = neighbors.iter().map(|n| -exponent * n.distance.ln()).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut scores = vec![0.0; v];
    for (n, w) in neighbors.iter().zip(&weights) {
        for (s, u) in scores.iter_mut().zip(memberships.row(n.index)) {
            *s += w * u;
        }
    }
    scores.iter_mut().for_each(|s| *s /= total);
    scores
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FknnModel {
    knn: KnnModel,
    memberships: Matrix,
    fuzzifier: f64,
    init: MembershipInit,
}

impl FknnModel {
    /// `init = None` selects Keller initialisation with `k` neighbors.
    pub fn fit(
        train: Matrix,
        labels: Vec<usize>,
        n_varieties: usize,
        k: usize,
        metric: MetricKind,
        fuzzifier: f64,
        init: Option<MembershipInit>,
    ) -> Result<Self> {
        let knn = KnnModel::fit(train, labels, n_varieties, k, metric)?;
        let init = init.unwrap_or(MembershipInit::Keller { neighbors: k });
        let memberships = fknn_init_memberships(knn.index(), init)?;
        Self::from_parts(knn, memberships, fuzzifier, init)
    }

    pub fn from_parts(
        knn: KnnModel,
        memberships: Matrix,
        fuzzifier: f64,
        init: MembershipInit,
    ) -> Result<Self> {
        if !(fuzzifier > 1.0 && fuzzifier.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "fuzzifier {fuzzifier} must be finite and > 1"
            )));
        }
        if memberships.rows() != knn.index().len()
            || memberships.cols() != knn.index().n_varieties()
        {
            return Err(Error::Dimension {
                expected: knn.index().len() * knn.index().n_varieties(),
                got: memberships.rows() * memberships.cols(),
            });
        }
        Ok(Self {
            knn,
            memberships,
            fuzzifier,
            init,
        })
    }

    pub fn knn(&self) -> &KnnModel {
        &self.knn
    }

    pub fn memberships(&self) -> &Matrix {
        &self.memberships
    }

    pub fn fuzzifier(&self) -> f64 {
        self.fuzzifier
    }

    pub(crate) fn rebuild(&mut self) {
        self.knn.rebuild();
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.knn.validate()?;
        let index = self.knn.index();
        if self.memberships.rows() != index.len()
            || self.memberships.cols() != index.n_varieties()
            || self.memberships.as_slice().len() != index.len() * index.n_varieties()
            || !self.memberships.is_finite()
            || !(self.fuzzifier > 1.0 && self.fuzzifier.is_finite())
        {
            return Err(Error::ModelFormat("inconsistent fuzzy KNN model".into()));
        }
        Ok(())
    }

    /// Membership of `q` in every variety; sums to one.
    pub fn class_scores(&self, q: &[f64]) -> Result<Vec<f64>> {
        let nn = self.knn.index().nearest(q, self.knn.k())?;
        Ok(fuzzy_scores(&nn, &self.memberships, self.fuzzifier))
    }

    /// Varieties with non-zero membership, by descending score then id.
    pub fn predict(&self, q: &[f64]) -> Result<RankedPrediction> {
        Ok(RankedPrediction::from_positive_scores(&self.class_scores(q)?))
    }

    pub fn predict_batch(&self, queries: &Matrix) -> Result<Vec<RankedPrediction>> {
        (0..queries.rows())
            .into_par_iter()
            .map(|i| self.predict(queries.row(i)))
            .collect()
    }
}
