//! Reference implementations used as oracles by the integration tests.
//! They favour the plainest possible formulation over speed.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shelfcat::neighbors::MetricKind;
use shelfcat::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Small integer coordinates so that equal values occur often.
pub fn lattice_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2..=2) as f64).collect()
}

/// Rank of each value counting smaller values, ties sharing their mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn pearson_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 1.0;
    }
    (1.0 - cov / (va * vb).sqrt()).clamp(0.0, 2.0)
}

/// Per-column sample variance (n - 1 denominator).
pub fn column_variances(m: &Matrix) -> Vec<f64> {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|j| {
            let mean = (0..m.rows()).map(|i| m.get(i, j)).sum::<f64>() / n;
            (0..m.rows()).map(|i| (m.get(i, j) - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}

pub fn distance(kind: MetricKind, a: &[f64], b: &[f64], variances: &[f64]) -> f64 {
    let diffs = a.iter().zip(b).map(|(x, y)| x - y);
    match kind {
        MetricKind::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        MetricKind::Cityblock => diffs.map(f64::abs).sum(),
        MetricKind::Chebychev => diffs.map(f64::abs).fold(0.0, f64::max),
        MetricKind::Seuclidean => diffs
            .zip(variances)
            .map(|(d, v)| if *v > 0.0 { d * d / v } else { 0.0 })
            .sum::<f64>()
            .sqrt(),
        MetricKind::Hamming => {
            a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
        }
        MetricKind::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
            }
        }
        MetricKind::Correlation => pearson_distance(a, b),
        MetricKind::Spearman => pearson_distance(&ranks(a), &ranks(b)),
        MetricKind::Jaccard => {
            // same-sign pairs overlap by the smaller magnitude; opposite signs not at all
            let (mut overlap, mut union) = (0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                if x.signum() == y.signum() {
                    overlap += x.abs().min(y.abs());
                    union += x.abs().max(y.abs());
                } else {
                    union += x.abs() + y.abs();
                }
            }
            if union == 0.0 {
                0.0
            } else {
                1.0 - overlap / union
            }
        }
    }
}

/// Exhaustive-scan KNN: varieties by vote count, ties by the position of
/// their closest neighbor, scores as vote fractions.
pub fn knn_ranking(
    train: &Matrix,
    labels: &[usize],
    q: &[f64],
    k: usize,
    kind: MetricKind,
    variances: &[f64],
) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = train
        .iter_rows()
        .enumerate()
        .map(|(i, r)| (distance(kind, q, r, variances), i))
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nearest = &all[..k];
    let mut seen: Vec<usize> = Vec::new();
    for (_, i) in nearest {
        if !seen.contains(&labels[*i]) {
            seen.push(labels[*i]);
        }
    }
    let votes = |v: usize| nearest.iter().filter(|(_, i)| labels[*i] == v).count();
    // stable sort keeps first-seen order among equal vote counts
    seen.sort_by_key(|&v| std::cmp::Reverse(votes(v)));
    seen.into_iter().map(|v| (v, votes(v) as f64 / k as f64)).collect()
}
