//! Binary product matrix and count-valued variety matrix.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::textprep::{Vocabulary, WordList};

/// Products × vocabulary incidence matrix, stored as sorted column ids per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductMatrix {
    n_cols: usize,
    n_varieties: usize,
    rows: Vec<Vec<u32>>,
    labels: Vec<usize>,
}

impl ProductMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_varieties(&self) -> usize {
        self.n_varieties
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Column ids set to 1 in row `i`, ascending.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        u8::from(self.rows[i].binary_search(&(j as u32)).is_ok())
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows.len(), self.n_cols);
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row {
                m.set(i, j as usize, 1.0);
            }
        }
        m
    }

    /// Sparse triplet dump: a `m n V` header, then `row col 1` per non-zero.
    pub fn dump(&self) -> String {
        let mut s = format!("{} {} {}\n", self.rows.len(), self.n_cols, self.n_varieties);
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row {
                let _ = writeln!(s, "{i} {j} 1");
            }
        }
        s
    }
}

pub fn build_product_matrix(
    lists: &[WordList],
    vocab: &Vocabulary,
    labels: &[usize],
    n_varieties: usize,
) -> Result<ProductMatrix> {
    if lists.len() != labels.len() {
        return Err(Error::Dimension {
            expected: lists.len(),
            got: labels.len(),
        });
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_varieties) {
        return Err(Error::InvalidParameter(format!(
            "label {l} of product {i} outside 0..{n_varieties}"
        )));
    }
    let rows = lists
        .iter()
        .map(|wl| vocab.columns(wl).into_iter().map(|j| j as u32).collect())
        .collect();
    Ok(ProductMatrix {
        n_cols: vocab.len(),
        n_varieties,
        rows,
        labels: labels.to_vec(),
    })
}

/// Varieties × vocabulary counts: `Y[i, j]` is the number of products of
/// variety `i` containing word `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarietyMatrix {
    n_varieties: usize,
    n_cols: usize,
    counts: Vec<u32>,
    totals: Vec<u64>,
    avvl: f64,
}

impl VarietyMatrix {
    /// Builds directly from a dense row-major count table.
    pub fn from_counts(n_varieties: usize, n_cols: usize, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != n_varieties * n_cols {
            return Err(Error::Dimension {
                expected: n_varieties * n_cols,
                got: counts.len(),
            });
        }
        if n_varieties == 0 {
            return Err(Error::Empty("variety matrix"));
        }
        let totals: Vec<u64> = counts
            .chunks(n_cols.max(1))
            .take(n_varieties)
            .map(|r| r.iter().map(|&c| u64::from(c)).sum())
            .collect();
        let totals = if n_cols == 0 {
            vec![0; n_varieties]
        } else {
            totals
        };
        let avvl = totals.iter().sum::<u64>() as f64 / n_varieties as f64;
        Ok(Self {
            n_varieties,
            n_cols,
            counts,
            totals,
            avvl,
        })
    }

    pub fn n_varieties(&self) -> usize {
        self.n_varieties
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n_cols + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.counts[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Total word count `|v|` of variety `i`.
    pub fn total(&self, i: usize) -> u64 {
        self.totals[i]
    }

    /// Mean of the per-variety totals.
    pub fn avvl(&self) -> f64 {
        self.avvl
    }

    pub fn dump(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n_varieties, self.n_cols, self.n_varieties);
        for i in 0..self.n_varieties {
            for (j, &c) in self.row(i).iter().enumerate() {
                if c > 0 {
                    let _ = writeln!(s, "{i} {j} {c}");
                }
            }
        }
        s
    }
}

pub fn build_variety_matrix(x: &ProductMatrix) -> VarietyMatrix {
    let mut counts = vec![0u32; x.n_varieties * x.n_cols];
    for (row, &label) in x.rows.iter().zip(&x.labels) {
        let base = label * x.n_cols;
        for &j in row {
            counts[base + j as usize] += 1;
        }
    }
    VarietyMatrix::from_counts(x.n_varieties, x.n_cols, counts)
        .expect("dimensions consistent by construction")
}

/// Binary row for an unseen product; out-of-vocabulary words are dropped.
pub fn vectorize_new(wl: &WordList, vocab: &Vocabulary) -> Vec<f64> {
    let mut row = vec![0.0; vocab.len()];
    for j in vocab.columns(wl) {
        row[j] = 1.0;
    }
    row
}

/// Parsed form of a matrix dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseDump {
    pub rows: usize,
    pub cols: usize,
    pub varieties: usize,
    pub entries: Vec<(usize, usize, u64)>,
}

/// Reads a dump written by [`ProductMatrix::dump`] or [`VarietyMatrix::dump`].
/// Entries must be in range, strictly increasing by (row, col) and non-zero.
pub fn parse_dump(text: &str) -> Result<SparseDump> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Empty("matrix dump"))?;
    let nums = |line_no: usize, line: &str| -> Result<[u64; 3]> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!(
                "dump line {}: expected 3 fields, found {}",
                line_no + 1,
                parts.len()
            )));
        }
        let mut out = [0u64; 3];
        for (o, p) in out.iter_mut().zip(&parts) {
            *o = p.parse().map_err(|_| {
                Error::Parse(format!("dump line {}: {p:?} is not an integer", line_no + 1))
            })?;
        }
        Ok(out)
    };
    let [rows, cols, varieties] = nums(0, header)?;
    let to_usize = |v: u64| {
        usize::try_from(v).map_err(|_| Error::Parse(format!("dump value {v} too large")))
    };
    let (rows, cols, varieties) = (to_usize(rows)?, to_usize(cols)?, to_usize(varieties)?);
    let mut entries: Vec<(usize, usize, u64)> = Vec::new();
    for (no, line) in lines {
        let [i, j, v] = nums(no, line)?;
        let (i, j) = (to_usize(i)?, to_usize(j)?);
        if i >= rows || j >= cols {
            return Err(Error::Parse(format!(
                "dump line {}: entry ({i}, {j}) outside {rows}x{cols}",
                no + 1
            )));
        }
        if v == 0 {
            return Err(Error::Parse(format!("dump line {}: explicit zero", no + 1)));
        }
        if let Some(&(pi, pj, _)) = entries.last() {
            if (i, j) <= (pi, pj) {
                return Err(Error::Parse(format!(
                    "dump line {}: entries out of order",
                    no + 1
                )));
            }
        }
        entries.push((i, j, v));
    }
    Ok(SparseDump {
        rows,
        cols,
        varieties,
        entries,
    })
}
