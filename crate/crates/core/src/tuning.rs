//! Hyperparameter grids for the neighbor classifiers and the MLP.
//!
//! Each cell reports Top-1/2/3 accuracy on the held-out rows. Cells are
//! returned in a fixed order whatever order they were evaluated in, and the
//! best cell per Top-k regime is the first one reaching the column maximum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::topk_hit;
use crate::matrix::Matrix;
use crate::mlp::{init_mlp, train_mlp_with, MlpConfig};
use crate::neighbors::{
    fuzzy_scores, keller_memberships, vote_ranking, DistanceMetric, MetricKind, Neighbor,
    NeighborIndex,
};
use crate::ranking::RankedPrediction;

/// Labelled rows.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSet<'a> {
    pub x: &'a Matrix,
    pub y: &'a [usize],
}

impl LabeledSet<'_> {
    fn check(&self, what: &'static str) -> Result<()> {
        if self.x.rows() != self.y.len() {
            return Err(Error::Dimension {
                expected: self.x.rows(),
                got: self.y.len(),
            });
        }
        if self.y.is_empty() {
            return Err(Error::Empty(what));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell<P> {
    #[serde(flatten)]
    pub params: P,
    /// Top-1, Top-2 and Top-3 accuracy.
    pub accuracy: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport<P> {
    pub cells: Vec<GridCell<P>>,
    /// Index into `cells` of the best cell for Top-1, Top-2 and Top-3.
    pub best: [usize; 3],
}

impl<P> TuneReport<P> {
    fn new(cells: Vec<GridCell<P>>) -> Self {
        let mut best = [0; 3];
        for (t, b) in best.iter_mut().enumerate() {
            for (i, c) in cells.iter().enumerate() {
                if c.accuracy[t] > cells[*b].accuracy[t] {
                    *b = i;
                }
            }
        }
        Self { cells, best }
    }

    pub fn best_cell(&self, topk: usize) -> &GridCell<P> {
        &self.cells[self.best[topk - 1]]
    }
}

fn accuracies(preds: &[RankedPrediction], truths: &[usize]) -> [f64; 3] {
    let n = truths.len() as f64;
    let mut out = [0.0; 3];
    for (t, o) in out.iter_mut().enumerate() {
        let hits = preds
            .iter()
            .zip(truths)
            .filter(|(p, &y)| topk_hit(p, y, t + 1))
            .count();
        *o = hits as f64 / n;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "variant")]
pub enum NeighborVariant {
    Knn,
    /// Keller-initialised fuzzy KNN with `k` membership neighbors.
    Fknn { fuzzifier: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KnnParams {
    pub metric: MetricKind,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnGrid {
    pub ks: Vec<usize>,
    pub metrics: Vec<MetricKind>,
}

impl Default for KnnGrid {
    /// Odd k from 1 to 29 over every metric.
    fn default() -> Self {
        Self {
            ks: (1..30).step_by(2).collect(),
            metrics: MetricKind::ALL.to_vec(),
        }
    }
}

pub fn tune_knn(
    train: LabeledSet,
    test: LabeledSet,
    n_varieties: usize,
    variant: NeighborVariant,
    grid: &KnnGrid,
) -> Result<TuneReport<KnnParams>> {
    train.check("training set")?;
    test.check("test set")?;
    let mut ks = grid.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let mut metrics = grid.metrics.clone();
    metrics.sort_unstable();
    metrics.dedup();
    let (Some(&kmin), Some(&kmax)) = (ks.first(), ks.last()) else {
        return Err(Error::InvalidParameter("empty k grid".into()));
    };
    if metrics.is_empty() {
        return Err(Error::InvalidParameter("empty metric grid".into()));
    }
    let m = train.x.rows();
    let limit = match variant {
        NeighborVariant::Knn => m,
        NeighborVariant::Fknn { fuzzifier } => {
            if !(fuzzifier > 1.0 && fuzzifier.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "fuzzifier {fuzzifier} must be finite and > 1"
                )));
            }
            m - 1
        }
    };
    if kmin == 0 || kmax > limit {
        return Err(Error::InvalidParameter(format!(
            "k grid {kmin}..={kmax} must lie within 1..={limit}"
        )));
    }

    let per_metric: Vec<Vec<GridCell<KnnParams>>> = metrics
        .par_iter()
        .map(|&kind| -> Result<Vec<GridCell<KnnParams>>> {
            let metric = DistanceMetric::fit(kind, train.x);
            let index = NeighborIndex::new(train.x.clone(), train.y.to_vec(), n_varieties, metric)?;
            let lists: Vec<Vec<Neighbor>> = (0..test.x.rows())
                .into_par_iter()
                .map(|i| index.nearest(test.x.row(i), kmax))
                .collect::<Result<_>>()?;
            let member_lists: Vec<Vec<Neighbor>> = match variant {
                NeighborVariant::Knn => Vec::new(),
                NeighborVariant::Fknn { .. } => (0..m)
                    .into_par_iter()
                    .map(|i| index.nearest_to_member(i, kmax))
                    .collect(),
            };
            ks.par_iter()
                .map(|&k| {
                    let preds: Vec<RankedPrediction> = match variant {
                        NeighborVariant::Knn => lists
                            .iter()
                            .map(|l| vote_ranking(&l[..k], train.y))
                            .collect(),
                        NeighborVariant::Fknn { fuzzifier } => {
                            let u = keller_memberships(&member_lists, train.y, k, n_varieties);
                            lists
                                .iter()
                                .map(|l| {
                                    RankedPrediction::from_positive_scores(&fuzzy_scores(
                                        &l[..k], &u, fuzzifier,
                                    ))
                                })
                                .collect()
                        }
                    };
                    Ok(GridCell {
                        params: KnnParams { metric: kind, k },
                        accuracy: accuracies(&preds, test.y),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(TuneReport::new(per_metric.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MlpParams {
    pub nodes: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpGrid {
    pub nodes: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Default for MlpGrid {
    fn default() -> Self {
        Self {
            nodes: (300..=800).step_by(100).collect(),
            epochs: (100..=800).step_by(100).collect(),
        }
    }
}

impl MlpGrid {
    /// The default grid with every value divided by `factor` (at least 1).
    pub fn scaled_down(factor: usize) -> Self {
        let d = |v: usize| (v / factor.max(1)).max(1);
        let g = Self::default();
        Self {
            nodes: g.nodes.into_iter().map(d).collect(),
            epochs: g.epochs.into_iter().map(d).collect(),
        }
    }
}

/// Trains one network per width for the largest epoch count and scores the
/// intermediate state after each listed epoch count. `base` supplies depth,
/// learning rate, batch size and seed.
pub fn tune_mlp(
    train: LabeledSet,
    test: LabeledSet,
    n_varieties: usize,
    grid: &MlpGrid,
    base: &MlpConfig,
) -> Result<TuneReport<MlpParams>> {
    train.check("training set")?;
    test.check("test set")?;
    let mut nodes = grid.nodes.clone();
    nodes.sort_unstable();
    nodes.dedup();
    let mut epochs = grid.epochs.clone();
    epochs.sort_unstable();
    epochs.dedup();
    let Some(&max_epochs) = epochs.last() else {
        return Err(Error::InvalidParameter("empty epoch grid".into()));
    };
    if nodes.is_empty() {
        return Err(Error::InvalidParameter("empty node grid".into()));
    }
    let per_width: Vec<Vec<GridCell<MlpParams>>> = nodes
        .par_iter()
        .map(|&n| -> Result<Vec<GridCell<MlpParams>>> {
            let cfg = MlpConfig {
                nodes_per_layer: n,
                epochs: max_epochs,
                ..base.clone()
            };
            let model = init_mlp(&cfg, train.x.cols(), n_varieties)?;
            let mut cells = Vec::new();
            let mut failure = None;
            train_mlp_with(model, train.x, train.y, &cfg, |done, m| {
                if failure.is_some() || epochs.binary_search(&done).is_err() {
                    return;
                }
                match m.predict_batch(test.x) {
                    Ok(preds) => cells.push(GridCell {
                        params: MlpParams { nodes: n, epochs: done },
                        accuracy: accuracies(&preds, test.y),
                    }),
                    Err(e) => failure = Some(e),
                }
            })?;
            match failure {
                Some(e) => Err(e),
                None => Ok(cells),
            }
        })
        .collect::<Result<_>>()?;
    Ok(TuneReport::new(per_width.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::{FknnModel, KnnModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 3;
            rows.push([c as f64 * 2.0 + rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0), c as f64 + rng.random_range(-1.0..1.0)]);
            y.push(c);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn knn_grid_matches_fitted_models() {
        let (xt, yt) = blobs(60, 1);
        let (xs, ys) = blobs(20, 2);
        let grid = KnnGrid { ks: vec![1, 3, 5], metrics: vec![MetricKind::Cosine, MetricKind::Spearman] };
        for variant in [NeighborVariant::Knn, NeighborVariant::Fknn { fuzzifier: 2.0 }] {
            let r = tune_knn(LabeledSet { x: &xt, y: &yt }, LabeledSet { x: &xs, y: &ys }, 3, variant, &grid).unwrap();
            assert_eq!(r.cells.len(), 6);
            for cell in &r.cells {
                let KnnParams { metric, k } = cell.params;
                let preds = match variant {
                    NeighborVariant::Knn => KnnModel::fit(xt.clone(), yt.clone(), 3, k, metric).unwrap().predict_batch(&xs).unwrap(),
                    NeighborVariant::Fknn { fuzzifier } => FknnModel::fit(xt.clone(), yt.clone(), 3, k, metric, fuzzifier, None)
                        .unwrap()
                        .predict_batch(&xs)
                        .unwrap(),
                };
                assert_eq!(cell.accuracy, accuracies(&preds, &ys));
            }
        }
    }

    #[test]
    fn order_of_grid_does_not_matter() {
        let (xt, yt) = blobs(40, 3);
        let (xs, ys) = blobs(15, 4);
        let a = KnnGrid { ks: vec![1, 3, 7], metrics: vec![MetricKind::Euclidean, MetricKind::Hamming] };
        let b = KnnGrid { ks: vec![7, 1, 3, 3], metrics: vec![MetricKind::Hamming, MetricKind::Euclidean] };
        let run = |g: &KnnGrid| tune_knn(LabeledSet { x: &xt, y: &yt }, LabeledSet { x: &xs, y: &ys }, 3, NeighborVariant::Knn, g).unwrap();
        assert_eq!(run(&a), run(&b));
    }

    #[test]
    fn best_is_first_maximum() {
        let cells = vec![
            GridCell { params: 0, accuracy: [0.5, 0.6, 0.9] },
            GridCell { params: 1, accuracy: [0.7, 0.6, 0.8] },
            GridCell { params: 2, accuracy: [0.7, 0.9, 0.9] },
        ];
        assert_eq!(TuneReport::new(cells).best, [1, 2, 0]);
    }

    #[test]
    fn k_larger_than_training_set_rejected() {
        let (xt, yt) = blobs(5, 1);
        let grid = KnnGrid { ks: vec![5], metrics: vec![MetricKind::Cosine] };
        let set = LabeledSet { x: &xt, y: &yt };
        assert!(tune_knn(set, set, 3, NeighborVariant::Knn, &grid).is_ok());
        assert!(tune_knn(set, set, 3, NeighborVariant::Fknn { fuzzifier: 2.0 }, &grid).is_err());
    }

    #[test]
    fn mlp_grid_shape() {
        let (xt, yt) = blobs(30, 5);
        let (xs, ys) = blobs(9, 6);
        let grid = MlpGrid { nodes: vec![4, 2], epochs: vec![3, 1, 2] };
        let base = MlpConfig { hidden_layers: 1, ..MlpConfig::default() };
        let r = tune_mlp(LabeledSet { x: &xt, y: &yt }, LabeledSet { x: &xs, y: &ys }, 3, &grid, &base).unwrap();
        let params: Vec<(usize, usize)> = r.cells.iter().map(|c| (c.params.nodes, c.params.epochs)).collect();
        assert_eq!(params, vec![(2, 1), (2, 2), (2, 3), (4, 1), (4, 2), (4, 3)]);
        assert_eq!(MlpGrid::default().nodes.len() * MlpGrid::default().epochs.len(), 48);
        assert_eq!(MlpGrid::scaled_down(100).epochs, vec![1, 2, 3, 4, 5, 6, 7, 8]);
    }
}
