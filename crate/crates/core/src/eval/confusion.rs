use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::descriptors::DescriptorSet;

/// Dense row-major matrix; rows index the database, columns the queries.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(ConfusionMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged matrix rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn transpose(&self) -> ConfusionMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            data.extend((0..self.rows).map(|i| self.get(i, j)));
        }
        ConfusionMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `M(i, j) = |db_i - query_j|`. Cells are computed independently, so the
/// result is the same for any thread count.
pub fn confusion_matrix(database: &DescriptorSet, queries: &DescriptorSet) -> Result<ConfusionMatrix> {
    if database.dim() != queries.dim() {
        return Err(Error::shape(format!(
            "descriptor lengths differ: database {}, queries {}",
            database.dim(),
            queries.dim()
        )));
    }
    let (rows, cols) = (database.len(), queries.len());
    let mut data = vec![0.0; rows * cols];
    if cols > 0 {
        data.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
            let d = database.get(i);
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = euclidean(d, queries.get(j));
            }
        });
    }
    ConfusionMatrix::from_vec(rows, cols, data)
}

/// Divides by the largest entry. An all-zero matrix is returned unchanged.
pub fn normalize_confusion(m: &ConfusionMatrix) -> Result<ConfusionMatrix> {
    if m.is_empty() {
        return Err(Error::usage("cannot normalise an empty matrix"));
    }
    if m.data.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::shape("distance matrix has negative or non-finite entries"));
    }
    let max = m.max();
    if max == 0.0 {
        return Ok(m.clone());
    }
    Ok(ConfusionMatrix {
        rows: m.rows,
        cols: m.cols,
        data: m.data.iter().map(|v| v / max).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionAxis {
    /// k smallest entries of each query column.
    #[default]
    PerQuery,
    /// k smallest entries of each database row.
    PerDatabase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl Mask {
    /// Mask with exactly the listed `(row, col)` cells marked.
    pub fn from_cells(rows: usize, cols: usize, cells: &[(usize, usize)]) -> Result<Self> {
        let mut data = vec![false; rows * cols];
        for &(i, j) in cells {
            if i >= rows || j >= cols {
                return Err(Error::usage(format!("cell ({i}, {j}) outside a {rows}x{cols} mask")));
            }
            data[i * cols + j] = true;
        }
        Ok(Mask { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Marked `(row, col)` pairs in row-major order.
    pub fn marked(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(idx, _)| (idx / self.cols, idx % self.cols))
    }
}

/// Indices of the `k` smallest values, ties going to the lowest index.
fn k_smallest(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let cmp = |a: &usize, b: &usize| values[*a].total_cmp(&values[*b]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx
}

/// Marks the `k` smallest entries along `axis`.
pub fn k_smallest_mask(m: &ConfusionMatrix, k: usize, axis: SelectionAxis) -> Result<Mask> {
    let extent = match axis {
        SelectionAxis::PerQuery => m.rows,
        SelectionAxis::PerDatabase => m.cols,
    };
    if k == 0 || k > extent {
        return Err(Error::usage(format!("k = {k} outside 1..={extent}")));
    }
    let mut data = vec![false; m.data.len()];
    match axis {
        SelectionAxis::PerQuery => {
            let mut column = vec![0.0; m.rows];
            for j in 0..m.cols {
                for (i, c) in column.iter_mut().enumerate() {
                    *c = m.get(i, j);
                }
                for i in k_smallest(&column, k) {
                    data[i * m.cols + j] = true;
                }
            }
        }
        SelectionAxis::PerDatabase => {
            for i in 0..m.rows {
                for j in k_smallest(m.row(i), k) {
                    data[i * m.cols + j] = true;
                }
            }
        }
    }
    Ok(Mask {
        rows: m.rows,
        cols: m.cols,
        data,
    })
}

/// Row expected to match query column `j`; the identity for square matrices.
pub fn diagonal_row(j: usize, rows: usize, cols: usize) -> usize {
    if rows == cols {
        j
    } else {
        ((j as f64 * rows as f64 / cols as f64).round() as usize).min(rows.saturating_sub(1))
    }
}

/// Fraction of marked entries within `d` of the diagonal.
pub fn inlier_ratio(mask: &Mask, d: usize) -> Result<f64> {
    let total = mask.count();
    if total == 0 {
        return Err(Error::usage("mask marks no entries"));
    }
    let inliers = mask
        .marked()
        .filter(|&(i, j)| i.abs_diff(diagonal_row(j, mask.rows, mask.cols)) <= d)
        .count();
    Ok(inliers as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceCurve {
    pub k: usize,
    /// `(d, ratio)` for `d = 0..=d_max`.
    pub points: Vec<(usize, f64)>,
}

impl PerformanceCurve {
    pub fn terminal(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }
}

/// Inlier ratio of the k-smallest mask for every tolerance `d` up to `d_max`.
pub fn performance_curve(
    m: &ConfusionMatrix,
    k: usize,
    d_max: usize,
    axis: SelectionAxis,
) -> Result<PerformanceCurve> {
    let mask = k_smallest_mask(m, k, axis)?;
    let total = mask.count();
    if total == 0 {
        return Err(Error::usage("cannot build a curve for an empty matrix"));
    }
    let mut hist = vec![0usize; d_max + 1];
    for (i, j) in mask.marked() {
        let off = i.abs_diff(diagonal_row(j, m.rows, m.cols));
        if off <= d_max {
            hist[off] += 1;
        }
    }
    let mut acc = 0;
    let points = hist
        .iter()
        .enumerate()
        .map(|(d, &n)| {
            acc += n;
            (d, acc as f64 / total as f64)
        })
        .collect();
    Ok(PerformanceCurve { k, points })
}

/// Fraction of query columns whose nearest database row (lowest index on
/// ties) is the diagonal one.
pub fn top1_accuracy(m: &ConfusionMatrix) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::usage("top-1 accuracy of an empty matrix"));
    }
    let hits = (0..m.cols)
        .filter(|&j| {
            let best = (0..m.rows)
                .min_by(|&a, &b| m.get(a, j).total_cmp(&m.get(b, j)).then(a.cmp(&b)))
                .unwrap();
            best == diagonal_row(j, m.rows, m.cols)
        })
        .count();
    Ok(hits as f64 / m.cols as f64)
}
