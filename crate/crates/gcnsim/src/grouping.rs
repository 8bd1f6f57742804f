//! Moving-average row grouping and the padded fixed-nnz sparse format.
//!
//! Sparse row-wise kernels with a variable inner trip count defeat loop
//! pipelining. Grouping partitions the rows one scan at a time: a cumulative
//! mean of per-row nonzero counts runs until it jumps by more than a
//! threshold, at which point the group closes and the triggering row starts
//! the next one. Every row in a group is then padded to the group's maximum
//! count so the inner loop becomes a compile-time constant within the group.

use crate::error::{Error, Result};
use crate::matcore::{CsrMatrix, DenseMatrix, Density};
use serde::{Deserialize, Serialize};

/// Resettable cumulative mean.
#[derive(Clone, Copy, Debug, Default)]
pub struct MovingAverage {
    count: usize,
    mean: f64,
}

impl MovingAverage {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold in one sample and return the new mean.
    pub fn update(&mut self, x: f64) -> f64 {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
        self.mean
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// A contiguous partition of row indices with one fixed per-row nonzero
/// count per group. `boundaries[g]` is the half-open row range of group `g`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowGroups {
    pub boundaries: Vec<(usize, usize)>,
    pub fixed_nnz: Vec<usize>,
}

impl RowGroups {
    /// One group covering all rows with the given fixed count.
    pub fn single(rows: usize, fixed_nnz: usize) -> Self {
        Self { boundaries: vec![(0, rows)], fixed_nnz: vec![fixed_nnz] }
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// Total rows covered; 0 for an empty group list.
    pub fn rows(&self) -> usize {
        self.boundaries.last().map_or(0, |&(_, end)| end)
    }

    /// Group index containing `row`.
    pub fn group_of(&self, row: usize) -> usize {
        self.boundaries
            .partition_point(|&(_, end)| end <= row)
    }

    /// Padded entry count: sum over groups of |group| * fixed_nnz.
    pub fn padded_entries(&self) -> usize {
        self.boundaries
            .iter()
            .zip(&self.fixed_nnz)
            .map(|(&(s, e), &f)| (e - s) * f)
            .sum()
    }

    /// Same boundaries with every fixed count multiplied by `factor`.
    pub fn scaled(&self, factor: usize) -> Self {
        Self {
            boundaries: self.boundaries.clone(),
            fixed_nnz: self.fixed_nnz.iter().map(|f| f * factor).collect(),
        }
    }

    /// Boundaries must tile [0, rows) contiguously, in order.
    pub fn validate_partition(&self, rows: usize) -> Result<()> {
        if self.boundaries.len() != self.fixed_nnz.len() {
            return Err(Error::Validation("boundary/fixed_nnz length mismatch".into()));
        }
        let mut expect = 0usize;
        for &(s, e) in &self.boundaries {
            if s != expect || e <= s {
                return Err(Error::Validation(format!(
                    "groups do not partition rows contiguously at ({s}, {e})"
                )));
            }
            expect = e;
        }
        if expect != rows {
            return Err(Error::Validation(format!(
                "groups cover {expect} rows, matrix has {rows}"
            )));
        }
        Ok(())
    }
}

/// Partition rows by scanning their nonzero counts with a cumulative mean.
///
/// When the relative change of the mean reaches `tau`, the open group closes
/// and the triggering row seeds a fresh mean and starts the next group, so
/// no row is ever dropped. A zero previous mean is replaced by the current
/// one before dividing. Each group's fixed count is its maximum row count.
pub fn group_rows(nnzs_rows: &[usize], tau: f64) -> Result<RowGroups> {
    if tau <= 0.0 || tau.is_nan() {
        return Err(Error::Parameter(format!("tau must be positive, got {tau}")));
    }
    if nnzs_rows.is_empty() {
        return Err(Error::Parameter("cannot group an empty row list".into()));
    }

    let mut ma = MovingAverage::new();
    let mut cur_ave = 0.0f64;
    let mut start = 0usize;
    let mut boundaries = Vec::new();
    for (i, &nnz) in nnzs_rows.iter().enumerate() {
        let mut pre_ave = cur_ave;
        cur_ave = ma.update(nnz as f64);
        if pre_ave == 0.0 {
            // Prevent division by zero on the first row and after resets.
            pre_ave = cur_ave;
        }
        let trigger = pre_ave > 0.0 && (cur_ave - pre_ave).abs() / pre_ave >= tau;
        if trigger && i > start {
            boundaries.push((start, i));
            start = i;
            ma.reset();
            cur_ave = ma.update(nnz as f64);
        }
    }
    boundaries.push((start, nnzs_rows.len()));

    let fixed_nnz = boundaries
        .iter()
        .map(|&(s, e)| nnzs_rows[s..e].iter().copied().max().unwrap_or(0))
        .collect();
    Ok(RowGroups { boundaries, fixed_nnz })
}

/// CSR variant where every row of group `g` stores exactly `fixed_nnz[g]`
/// entries. Padding entries carry the value 0.0 and replicate the row's last
/// real column index (column 0 for empty rows) so index lookups stay in
/// range and memory access stays local.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedCsr {
    rows: usize,
    cols: usize,
    groups: RowGroups,
    group_offsets: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f32>,
}

impl GroupedCsr {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn groups(&self) -> &RowGroups {
        &self.groups
    }

    /// Stored entries including padding.
    pub fn stored_entries(&self) -> usize {
        self.col_idx.len()
    }

    /// Density after padding: stored entries over rows * cols.
    pub fn padded_density(&self) -> Density {
        Density::new(self.stored_entries() as f64 / (self.rows as f64 * self.cols as f64))
            .expect("padded entries never exceed the full matrix")
    }

    /// The fixed-width entry span of one row.
    pub fn row_span(&self, r: usize) -> (&[usize], &[f32]) {
        let g = self.groups.group_of(r);
        let (gs, _) = self.groups.boundaries[g];
        let width = self.groups.fixed_nnz[g];
        let start = self.group_offsets[g] + (r - gs) * width;
        (&self.col_idx[start..start + width], &self.vals[start..start + width])
    }
}

/// Pad each row of `a` to its group's fixed count.
///
/// Fails if the groups do not partition the rows or a fixed count is smaller
/// than some row it covers.
pub fn build_grouped(a: &CsrMatrix, groups: &RowGroups) -> Result<GroupedCsr> {
    groups.validate_partition(a.rows())?;

    let mut group_offsets = Vec::with_capacity(groups.len());
    let mut total = 0usize;
    for (&(s, e), &f) in groups.boundaries.iter().zip(&groups.fixed_nnz) {
        group_offsets.push(total);
        total += (e - s) * f;
    }

    let mut col_idx = Vec::with_capacity(total);
    let mut vals = Vec::with_capacity(total);
    for (g, &(s, e)) in groups.boundaries.iter().enumerate() {
        let width = groups.fixed_nnz[g];
        for r in s..e {
            let nnz = a.row_nnz(r);
            if nnz > width {
                return Err(Error::Parameter(format!(
                    "row {r} has {nnz} nonzeros but its group is fixed at {width}"
                )));
            }
            let mut pad_col = 0usize;
            for (c, v) in a.iter_row(r) {
                col_idx.push(c);
                vals.push(v);
                pad_col = c;
            }
            for _ in nnz..width {
                col_idx.push(pad_col);
                vals.push(0.0);
            }
        }
    }

    Ok(GroupedCsr {
        rows: a.rows(),
        cols: a.cols(),
        groups: groups.clone(),
        group_offsets,
        col_idx,
        vals,
    })
}

/// Row-wise product over the padded format. Within each group the inner loop
/// has a constant trip count; padding contributes exact zeros, so the result
/// matches the unpadded row-wise product.
pub fn spmm_grouped(g: &GroupedCsr, b: &DenseMatrix) -> Result<DenseMatrix> {
    if g.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "grouped spmm inner dimensions differ: {}x{} by {}x{}",
            g.rows(),
            g.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut c = DenseMatrix::zeros(g.rows(), b.cols())?;
    for (gi, &(s, e)) in g.groups.boundaries.iter().enumerate() {
        let width = g.groups.fixed_nnz[gi];
        for r in s..e {
            let start = g.group_offsets[gi] + (r - s) * width;
            let crow = c.row_mut(r);
            // Constant trip count within the group.
            for t in 0..width {
                let k = g.col_idx[start + t];
                let v = g.vals[start + t];
                let brow = b.row(k);
                for (j, &bkj) in brow.iter().enumerate() {
                    crow[j] += v * bkj;
                }
            }
        }
    }
    Ok(c)
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::matcore::spmm_rowwise;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn grouping_is_lossless_under_spmm(rows in 1usize..28, cols in 1usize..28,
                                           n in 1usize..8, density in 0.0f64..0.5,
                                           tau in 0.05f64..2.0, seed in 0u64..500) {
            let a = CsrMatrix::random(rows, cols, density, seed).unwrap();
            let counts: Vec<usize> = (0..rows).map(|r| a.row_nnz(r)).collect();
            let groups = group_rows(&counts, tau).unwrap();
            let g = build_grouped(&a, &groups).unwrap();
            let b = DenseMatrix::random_uniform(cols, n, -1.0, 1.0, seed ^ 0x5a5a).unwrap();
            let got = spmm_grouped(&g, &b).unwrap();
            let want = spmm_rowwise(&a, &b).unwrap();
            prop_assert!(got.max_abs_diff(&want) < 1e-4);
        }

        #[test]
        fn splitting_groups_never_increases_padding(rows in 1usize..40, density in 0.0f64..0.6,
                                                    tau in 0.05f64..2.0, seed in 0u64..500) {
            let a = CsrMatrix::random(rows, 32, density, seed).unwrap();
            let counts: Vec<usize> = (0..rows).map(|r| a.row_nnz(r)).collect();
            let fine = group_rows(&counts, tau).unwrap();
            let coarse = group_rows(&counts, 1e9).unwrap();
            prop_assert_eq!(coarse.len(), 1);
            prop_assert!(fine.padded_entries() <= coarse.padded_entries());
        }

        #[test]
        fn groups_always_tile_the_rows(counts in proptest::collection::vec(0usize..40, 1..60),
                                       tau in 0.05f64..3.0) {
            let groups = group_rows(&counts, tau).unwrap();
            groups.validate_partition(counts.len()).unwrap();
            // Fixed count dominates every row it covers.
            for (&(s, e), &f) in groups.boundaries.iter().zip(&groups.fixed_nnz) {
                for r in s..e {
                    prop_assert!(counts[r] <= f);
                }
            }
        }
    }
}
