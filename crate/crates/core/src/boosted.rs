//! Gradient-boosted regression trees for multi-class classification.
//!
//! Each boosting round fits one tree per class to the second-order expansion
//! of the softmax cross-entropy around the current raw scores:
//!
//! * gradient `g = p_c - [y = c]`, hessian `h = p_c (1 - p_c)`
//! * leaf weight `w = -G / (H + λ)`
//! * split gain `½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) - G²/(H+λ)] - γ`, kept only if positive
//!
//! The regularized objective is the summed cross-entropy plus, per tree,
//! `γ T + ½ λ Σ w²` over its `T` leaves, with `w` the shrunken contribution
//! `η · w` that the tree actually adds to the scores.
//!
//! Splits are found by exact greedy search over sorted feature values with
//! midpoint thresholds; rows with `x <= threshold` go left.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ranking::RankedPrediction;

/// Lower bound for the log-prior of a class absent from the training labels.
const MIN_BASE_SCORE: f64 = -30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.3,
            max_depth: 6,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("gbt: {what}")));
        if self.rounds == 0 {
            return bad("rounds must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be >= 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and >= 0");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be finite and >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// A regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Index of the leaf node reached by `x`.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => unreachable!("leaf_of returns leaves"),
        }
    }

    /// (node index, weight) of every leaf.
    pub fn leaves(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n {
                Node::Leaf { weight } => Some((i, *weight)),
                Node::Split { .. } => None,
            })
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Overwrites the weight of leaf `node`.
    pub fn set_leaf_weight(&mut self, node: usize, w: f64) -> Result<()> {
        match self.nodes.get_mut(node) {
            Some(Node::Leaf { weight }) => {
                *weight = w;
                Ok(())
            }
            _ => Err(Error::InvalidParameter(format!("node {node} is not a leaf"))),
        }
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::ModelFormat(msg));
        if self.nodes.is_empty() {
            return bad("empty tree".into());
        }
        // children must point forward so traversal terminates
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                Node::Leaf { weight } if !weight.is_finite() => {
                    return bad(format!("leaf {i} has non-finite weight"))
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } if feature >= n_features
                    || threshold.is_nan()
                    || left <= i
                    || right <= i
                    || left >= self.nodes.len()
                    || right >= self.nodes.len() =>
                {
                    return bad(format!("malformed split node {i}"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn leaf_score(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        -g / d
    } else {
        0.0
    }
}

/// Row indices sorted by each feature's value (ties by row index).
pub fn presort(x: &Matrix) -> Vec<Vec<u32>> {
    (0..x.cols())
        .into_par_iter()
        .map(|f| {
            let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
            idx.sort_by(|&a, &b| {
                x.get(a as usize, f)
                    .total_cmp(&x.get(b as usize, f))
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grows one tree level by level on the given gradients and hessians.
pub fn fit_tree(
    x: &Matrix,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    cfg: &GbtConfig,
) -> Tree {
    let m = x.rows();
    let lambda = cfg.lambda;
    let mut node_of = vec![0usize; m];
    // (G, H) per node
    let mut sums: Vec<(f64, f64)> = vec![(grad.iter().sum(), hess.iter().sum())];
    let mut nodes = vec![Node::Leaf { weight: 0.0 }];
    let mut frontier: Vec<usize> = vec![0];

    for _ in 0..cfg.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot_of = vec![usize::MAX; nodes.len()];
        for (s, &n) in frontier.iter().enumerate() {
            slot_of[n] = s;
        }
        let per_feature: Vec<Vec<Option<Candidate>>> = sorted
            .par_iter()
            .enumerate()
            .map(|(f, order)| {
                let k = frontier.len();
                let mut gl = vec![0.0; k];
                let mut hl = vec![0.0; k];
                let mut last: Vec<Option<f64>> = vec![None; k];
                let mut best: Vec<Option<Candidate>> = vec![None; k];
                for &r in order {
                    let r = r as usize;
                    let s = slot_of[node_of[r]];
                    if s == usize::MAX {
                        continue;
                    }
                    let v = x.get(r, f);
                    if let Some(lv) = last[s] {
                        if v > lv {
                            let (g, h) = sums[frontier[s]];
                            let (gr, hr) = (g - gl[s], h - hl[s]);
                            if hl[s] >= cfg.min_child_weight && hr >= cfg.min_child_weight {
                                let gain = 0.5
                                    * (leaf_score(gl[s], hl[s], lambda)
                                        + leaf_score(gr, hr, lambda)
                                        - leaf_score(g, h, lambda))
                                    - cfg.gamma;
                                if gain > best[s].map_or(0.0, |c| c.gain) {
                                    let mut threshold = lv + (v - lv) / 2.0;
                                    if threshold >= v {
                                        threshold = lv;
                                    }
                                    best[s] = Some(Candidate {
                                        gain,
                                        feature: f,
                                        threshold,
                                    });
                                }
                            }
                        }
                    }
                    gl[s] += grad[r];
                    hl[s] += hess[r];
                    last[s] = Some(v);
                }
                best
            })
            .collect();

        let mut next = Vec::new();
        let mut split_children: Vec<Option<(usize, f64, usize, usize)>> = vec![None; frontier.len()];
        for (s, &node) in frontier.iter().enumerate() {
            let mut best: Option<Candidate> = None;
            for cands in &per_feature {
                if let Some(c) = cands[s] {
                    if best.is_none_or(|b| c.gain > b.gain) {
                        best = Some(c);
                    }
                }
            }
            if let Some(c) = best {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { weight: 0.0 });
                nodes.push(Node::Leaf { weight: 0.0 });
                sums.push((0.0, 0.0));
                sums.push((0.0, 0.0));
                nodes[node] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                };
                split_children[s] = Some((c.feature, c.threshold, left, right));
                next.push(left);
                next.push(right);
            }
        }
        if next.is_empty() {
            break;
        }
        for r in 0..m {
            let s = match slot_of.get(node_of[r]) {
                Some(&s) if s != usize::MAX => s,
                _ => continue,
            };
            if let Some((f, t, left, right)) = split_children[s] {
                let child = if x.get(r, f) <= t { left } else { right };
                node_of[r] = child;
                sums[child].0 += grad[r];
                sums[child].1 += hess[r];
            }
        }
        frontier = next;
    }

    for (i, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { weight } = node {
            *weight = leaf_weight(sums[i].0, sums[i].1, lambda);
        }
    }
    Tree { nodes }
}

/// Second-order objective of a tree with its current leaf weights:
/// `Σ_i [g_i w(i) + ½ h_i w(i)²] + γ T + ½ λ Σ w²`.
pub fn second_order_objective(
    tree: &Tree,
    x: &Matrix,
    grad: &[f64],
    hess: &[f64],
    lambda: f64,
    gamma: f64,
) -> f64 {
    let loss: f64 = (0..x.rows())
        .map(|i| {
            let w = tree.output(x.row(i));
            grad[i] * w + 0.5 * hess[i] * w * w
        })
        .sum();
    let leaves = tree.leaves();
    let penalty: f64 = leaves.iter().map(|(_, w)| w * w).sum::<f64>() * 0.5 * lambda;
    loss + gamma * leaves.len() as f64 + penalty
}

fn softmax_in_place(z: &mut [f64]) {
    let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - top).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

fn log_softmax_at(z: &[f64], at: usize) -> f64 {
    let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + z.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
    z[at] - lse
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    n_classes: usize,
    n_features: usize,
    learning_rate: f64,
    lambda: f64,
    gamma: f64,
    base: Vec<f64>,
    /// `rounds[r][c]`: the tree for class `c` in round `r`.
    rounds: Vec<Vec<Tree>>,
    /// Set when training saw a single class; predictions are then certain.
    constant_class: Option<usize>,
}

/// Training result with the regularized objective after each round
/// (entry 0 is the base-score model).
#[derive(Debug, Clone)]
pub struct GbtFit {
    pub model: GbtModel,
    pub objective: Vec<f64>,
}

pub fn fit_gbt(x: &Matrix, y: &[usize], n_classes: usize, cfg: &GbtConfig) -> Result<GbtModel> {
    Ok(fit_gbt_traced(x, y, n_classes, cfg)?.model)
}

pub fn fit_gbt_traced(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    cfg: &GbtConfig,
) -> Result<GbtFit> {
    cfg.validate()?;
    let m = x.rows();
    if m != y.len() {
        return Err(Error::Dimension {
            expected: m,
            got: y.len(),
        });
    }
    if m == 0 {
        return Err(Error::Empty("training set"));
    }
    if !x.is_finite() {
        return Err(Error::Numeric("non-finite feature in boosting input".into()));
    }
    if let Some(&l) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidParameter(format!(
            "label {l} outside 0..{n_classes}"
        )));
    }
    let mut counts = vec![0usize; n_classes];
    for &l in y {
        counts[l] += 1;
    }
    let base: Vec<f64> = counts
        .iter()
        .map(|&c| {
            if c == 0 {
                MIN_BASE_SCORE
            } else {
                (c as f64 / m as f64).ln().max(MIN_BASE_SCORE)
            }
        })
        .collect();
    let mut model = GbtModel {
        n_classes,
        n_features: x.cols(),
        learning_rate: cfg.learning_rate,
        lambda: cfg.lambda,
        gamma: cfg.gamma,
        base,
        rounds: Vec::new(),
        constant_class: None,
    };
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        model.constant_class = Some(y[0]);
        return Ok(GbtFit {
            objective: vec![model.training_objective(x, y)?],
            model,
        });
    }

    let sorted = presort(x);
    let mut raw: Vec<Vec<f64>> = vec![model.base.clone(); m];
    let mut penalty = 0.0;
    let mut objective = vec![cross_entropy(&raw, y)];
    for _ in 0..cfg.rounds {
        let probs: Vec<Vec<f64>> = raw
            .iter()
            .map(|z| {
                let mut p = z.clone();
                softmax_in_place(&mut p);
                p
            })
            .collect();
        let trees: Vec<Tree> = (0..n_classes)
            .into_par_iter()
            .map(|c| {
                let (grad, hess): (Vec<f64>, Vec<f64>) = probs
                    .iter()
                    .zip(y)
                    .map(|(p, &label)| {
                        let pc = p[c];
                        (pc - f64::from(u8::from(label == c)), pc * (1.0 - pc))
                    })
                    .unzip();
                fit_tree(x, &sorted, &grad, &hess, cfg)
            })
            .collect();
        for (i, z) in raw.iter_mut().enumerate() {
            for (c, t) in trees.iter().enumerate() {
                z[c] += cfg.learning_rate * t.output(x.row(i));
            }
        }
        penalty += trees
            .iter()
            .map(|t| model.tree_penalty(t))
            .sum::<f64>();
        model.rounds.push(trees);
        let total = cross_entropy(&raw, y) + penalty;
        if !total.is_finite() {
            return Err(Error::Numeric("boosting objective became non-finite".into()));
        }
        objective.push(total);
    }
    Ok(GbtFit { model, objective })
}

fn cross_entropy(raw: &[Vec<f64>], y: &[usize]) -> f64 {
    raw.iter()
        .zip(y)
        .map(|(z, &label)| -log_softmax_at(z, label))
        .sum()
}

impl GbtModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn rounds(&self) -> &[Vec<Tree>] {
        &self.rounds
    }

    pub fn constant_class(&self) -> Option<usize> {
        self.constant_class
    }

    fn tree_penalty(&self, t: &Tree) -> f64 {
        let leaves = t.leaves();
        let sq: f64 = leaves
            .iter()
            .map(|(_, w)| (self.learning_rate * w).powi(2))
            .sum();
        self.gamma * leaves.len() as f64 + 0.5 * self.lambda * sq
    }

    pub fn raw_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut z = self.base.clone();
        for round in &self.rounds {
            for (c, t) in round.iter().enumerate() {
                z[c] += self.learning_rate * t.output(x);
            }
        }
        Ok(z)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.raw_scores(x)?;
        if let Some(c) = self.constant_class {
            let mut p = vec![0.0; self.n_classes];
            p[c] = 1.0;
            return Ok(p);
        }
        softmax_in_place(&mut z);
        Ok(z)
    }

    pub fn predict(&self, x: &[f64]) -> Result<RankedPrediction> {
        Ok(RankedPrediction::from_scores(&self.predict_proba(x)?))
    }

    /// Summed cross-entropy on `(x, y)` plus the penalty of every tree.
    pub fn training_objective(&self, x: &Matrix, y: &[usize]) -> Result<f64> {
        let mut loss = 0.0;
        for (i, &label) in y.iter().enumerate() {
            if self.constant_class.is_some() {
                let p = self.predict_proba(x.row(i))?;
                loss -= p[label].ln();
            } else {
                loss -= log_softmax_at(&self.raw_scores(x.row(i))?, label);
            }
        }
        let penalty: f64 = self
            .rounds
            .iter()
            .flatten()
            .map(|t| self.tree_penalty(t))
            .sum();
        Ok(loss + penalty)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.base.len() != self.n_classes {
            return Err(Error::ModelFormat("base score length".into()));
        }
        for round in &self.rounds {
            if round.len() != self.n_classes {
                return Err(Error::ModelFormat("trees per round".into()));
            }
            for t in round {
                t.validate(self.n_features)?;
            }
        }
        if self.constant_class.is_some_and(|c| c >= self.n_classes) {
            return Err(Error::ModelFormat("constant class out of range".into()));
        }
        Ok(())
    }
}
