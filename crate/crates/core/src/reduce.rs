//! Principal component analysis over mean-centered data.
//!
//! Axes come from a thin SVD of the centered matrix. Variances use the
//! `m - 1` denominator. Each axis is sign-normalized so that its entry of
//! largest magnitude is positive, which makes fitted models reproducible.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default number of retained components.
pub const DEFAULT_COMPONENTS: usize = 600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `c × n`, one principal axis per row.
    components: Matrix,
    /// Variance along each axis, descending.
    eigenvalues: Vec<f64>,
    total_variance: f64,
    /// Set when the training data had no variance at all.
    degenerate: bool,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &Matrix {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// The model restricted to its first `count` axes.
    pub fn truncated(&self, count: usize) -> Result<PcaModel> {
        if count == 0 || count > self.n_components() {
            return Err(Error::InvalidParameter(format!(
                "cannot keep {count} of {} components",
                self.n_components()
            )));
        }
        let n = self.input_dim();
        let data = self.components.as_slice()[..count * n].to_vec();
        Ok(PcaModel {
            mean: self.mean.clone(),
            components: Matrix::from_vec(count, n, data)?,
            eigenvalues: self.eigenvalues[..count].to_vec(),
            total_variance: self.total_variance,
            degenerate: self.degenerate,
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ok = self.components.cols() == self.mean.len()
            && self.eigenvalues.len() == self.components.rows()
            && self.components.rows() >= 1
            && self.components.is_finite()
            && self.mean.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::ModelFormat("inconsistent PCA model".into()))
        }
    }

    /// Fraction of total variance captured by the first `count` components.
    pub fn retained_variance(&self, count: usize) -> Result<f64> {
        if count > self.n_components() {
            return Err(Error::InvalidParameter(format!(
                "asked for {count} components, model has {}",
                self.n_components()
            )));
        }
        if self.total_variance <= 0.0 {
            return Ok(if count == 0 { 0.0 } else { 1.0 });
        }
        let kept: f64 = self.eigenvalues[..count].iter().sum();
        Ok((kept / self.total_variance).clamp(0.0, 1.0))
    }

    pub fn transform_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self
            .components
            .iter_rows()
            .map(|axis| axis.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                got: x.cols(),
            });
        }
        let c = self.n_components();
        let mut out = Matrix::zeros(x.rows(), c);
        for (i, row) in x.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.transform_row(row)?);
        }
        Ok(out)
    }

    /// Maps reduced coordinates back to the input space.
    pub fn reconstruct_row(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n_components() {
            return Err(Error::Dimension {
                expected: self.n_components(),
                got: z.len(),
            });
        }
        let mut out = self.mean.clone();
        for (axis, &w) in self.components.iter_rows().zip(z) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += w * a;
            }
        }
        Ok(out)
    }
}

pub fn fit_pca(x: &Matrix, components: usize) -> Result<PcaModel> {
    let (m, n) = (x.rows(), x.cols());
    if components == 0 || components > m.min(n) {
        return Err(Error::InvalidParameter(format!(
            "PCA component count {components} outside 1..={} for {m}x{n} data",
            m.min(n)
        )));
    }
    if !x.is_finite() {
        return Err(Error::Numeric("non-finite value in PCA input".into()));
    }

    let mut mean = vec![0.0; n];
    for row in x.iter_rows() {
        for (s, v) in mean.iter_mut().zip(row) {
            *s += v;
        }
    }
    for s in &mut mean {
        *s /= m as f64;
    }
    let centered = DMatrix::from_fn(m, n, |i, j| x.get(i, j) - mean[j]);
    let dof = if m > 1 { (m - 1) as f64 } else { 1.0 };
    let total_variance = centered.norm_squared() / dof;

    let svd = centered
        .try_svd(false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let mut axes = Matrix::zeros(components, n);
    let mut eigenvalues = Vec::with_capacity(components);
    for (r, &k) in order.iter().take(components).enumerate() {
        let s = svd.singular_values[k];
        eigenvalues.push(s * s / dof);
        let axis = axes.row_mut(r);
        for (j, a) in axis.iter_mut().enumerate() {
            *a = v_t[(k, j)];
        }
        let pivot = axis
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (j, &a)| {
                if a.abs() > best.1 {
                    (j, a.abs())
                } else {
                    best
                }
            })
            .0;
        if axis[pivot] < 0.0 {
            axis.iter_mut().for_each(|a| *a = -*a);
        }
    }

    Ok(PcaModel {
        mean,
        components: axes,
        eigenvalues,
        total_variance,
        degenerate: total_variance == 0.0,
    })
}
