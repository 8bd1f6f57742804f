//! Dense and sparse matrix types, reference multiplication kernels, and
//! adjacency normalization.
//!
//! The kernels here are deliberately simple and deterministic: every
//! accumulation runs in ascending inner-index order, so structurally
//! different kernels elsewhere in the crate can be checked against these
//! within a small floating-point tolerance (or bit-exactly, where the
//! accumulation order is identical).

pub mod io;

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fill ratio of a matrix: nnz / (rows * cols). Always in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Density(f64);

impl Density {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || !(0.0..=1.0).contains(&value) {
            return Err(Error::Parameter(format!("density {value} outside [0, 1]")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4}%", self.0 * 100.0)
    }
}

/// Row-major dense matrix of f32 values.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter(format!(
                "dense matrix dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        Ok(Self { rows, cols, values: vec![0.0; rows * cols] })
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter(format!(
                "dense matrix dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "value buffer has {} entries, expected {}x{}={}",
                values.len(),
                rows,
                cols,
                rows * cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        Ok(m)
    }

    /// Uniformly random entries in [lo, hi), reproducible for a fixed seed.
    pub fn random_uniform(rows: usize, cols: usize, lo: f32, hi: f32, seed: u64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Parameter(format!("empty range [{lo}, {hi})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
        Self::from_vec(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// Largest absolute element-wise difference; infinity on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs())
            .fold(0.0, f64::max)
    }

    /// Element-wise sum. Shapes must match.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot add {}x{} to {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += *b;
        }
        Ok(())
    }
}

/// Sparse matrix in compressed sparse row format.
///
/// Invariants: `row_ptr` is non-decreasing with `row_ptr[0] == 0` and
/// `row_ptr[rows] == nnz`; column indices are strictly increasing within a
/// row and below `cols`; no explicit zero values are stored (intentional
/// padding lives in [`crate::grouping::GroupedCsr`], a distinct type).
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f32>,
}

impl CsrMatrix {
    pub fn new_empty(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter(format!(
                "sparse matrix dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        Ok(Self { rows, cols, row_ptr: vec![0; rows + 1], col_idx: Vec::new(), vals: Vec::new() })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::new_empty(n, n)?;
        m.col_idx = (0..n).collect();
        m.vals = vec![1.0; n];
        m.row_ptr = (0..=n).collect();
        Ok(m)
    }

    /// Build from coordinate triplets. Duplicates are summed; entries that
    /// are (or sum to) exactly zero are dropped.
    pub fn from_coo(rows: usize, cols: usize, triplets: &[(usize, usize, f32)]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Parameter(format!(
                "sparse matrix dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        for &(r, c, _) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::Shape(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f32)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f32> = Vec::with_capacity(sorted.len());
        let mut cur_row = 0usize;
        let mut i = 0usize;
        while i < sorted.len() {
            let (r, c, mut v) = sorted[i];
            i += 1;
            while i < sorted.len() && sorted[i].0 == r && sorted[i].1 == c {
                v += sorted[i].2;
                i += 1;
            }
            if v == 0.0 {
                continue;
            }
            while cur_row <= r {
                row_ptr[cur_row] = col_idx.len();
                cur_row += 1;
            }
            col_idx.push(c);
            vals.push(v);
        }
        while cur_row <= rows {
            row_ptr[cur_row] = col_idx.len();
            cur_row += 1;
        }
        Ok(Self { rows, cols, row_ptr, col_idx, vals })
    }

    /// Exact conversion from dense: every value that is not 0.0 is kept.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut row_ptr = Vec::with_capacity(m.rows() + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { rows: m.rows(), cols: m.cols(), row_ptr, col_idx, vals }
    }

    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let mut d = DenseMatrix::zeros(self.rows, self.cols)?;
        for i in 0..self.rows {
            for (j, v) in self.iter_row(i) {
                d.set(i, j, v);
            }
        }
        Ok(d)
    }

    /// Random matrix with roughly `density` fill, reproducible per seed.
    /// Values are uniform in [-1, 1) with exact zeros nudged away.
    pub fn random(rows: usize, cols: usize, density: f64, seed: u64) -> Result<Self> {
        Density::new(density)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if rng.gen::<f64>() < density {
                    let mut v: f32 = rng.gen_range(-1.0..1.0);
                    if v == 0.0 {
                        v = 0.5;
                    }
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_coo(rows, cols, &triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn vals(&self) -> &[f32] {
        &self.vals
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    /// Nonzeros of row `r` as (column, value) pairs in ascending column order.
    pub fn iter_row(&self, r: usize) -> impl Iterator<Item = (usize, f32)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().zip(&self.vals[span]).map(|(&c, &v)| (c, v))
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(i) => self.vals[span.start + i],
            Err(_) => 0.0,
        }
    }

    /// All stored entries as (row, col, value) triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f32)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.iter_row(r) {
                out.push((r, c, v));
            }
        }
        out
    }

    /// True when the nonzero pattern (ignoring values) is symmetric.
    pub fn pattern_is_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for r in 0..self.rows {
            for (c, _) in self.iter_row(r) {
                if self.get(c, r) == 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Check all CSR structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.row_ptr.len() != self.rows + 1 || self.row_ptr[0] != 0 {
            return Err(Error::Validation("malformed row_ptr".into()));
        }
        if *self.row_ptr.last().unwrap() != self.col_idx.len() || self.col_idx.len() != self.vals.len() {
            return Err(Error::Validation("row_ptr end does not match nnz".into()));
        }
        for r in 0..self.rows {
            if self.row_ptr[r] > self.row_ptr[r + 1] {
                return Err(Error::Validation(format!("row_ptr decreases at row {r}")));
            }
            let span = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
            for w in span.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Validation(format!(
                        "columns not strictly increasing in row {r}"
                    )));
                }
            }
            if let Some(&c) = span.last() {
                if c >= self.cols {
                    return Err(Error::Validation(format!("column index {c} out of range")));
                }
            }
        }
        if self.vals.iter().any(|&v| v == 0.0) {
            return Err(Error::Validation("explicit zero value stored".into()));
        }
        Ok(())
    }

    pub fn density(&self) -> Density {
        density(self)
    }
}

/// nnz / (rows * cols).
pub fn density(a: &CsrMatrix) -> Density {
    Density(a.nnz() as f64 / (a.rows() as f64 * a.cols() as f64))
}

/// Dense matrix product C = A * B with f32 accumulation in ascending
/// inner-index order, so results are reproducible bit for bit.
pub fn dense_gemm(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "gemm inner dimensions differ: {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (m, n) = (a.rows(), b.cols());
    let mut c = DenseMatrix::zeros(m, n)?;
    for i in 0..m {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for (l, &ail) in arow.iter().enumerate() {
            let brow = b.row(l);
            for (j, &blj) in brow.iter().enumerate() {
                crow[j] += ail * blj;
            }
        }
    }
    Ok(c)
}

/// Row-wise sparse-dense product: C[i, :] = sum over stored (i, k, v) of
/// v * B[k, :]. Rows of A with no nonzeros produce exactly-zero output rows.
pub fn spmm_rowwise(a: &CsrMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "spmm inner dimensions differ: {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut c = DenseMatrix::zeros(a.rows(), b.cols())?;
    for i in 0..a.rows() {
        let crow = c.row_mut(i);
        for (k, v) in a.iter_row(i) {
            let brow = b.row(k);
            for (j, &bkj) in brow.iter().enumerate() {
                crow[j] += v * bkj;
            }
        }
    }
    Ok(c)
}

/// Symmetric normalization of an adjacency matrix with self-loops added:
/// returns D^(-1/2) * (A + I) * D^(-1/2) where D_ii is the row sum of A + I.
///
/// The added identity guarantees every degree is at least one, so no
/// division by zero can occur even for isolated vertices.
pub fn normalize_adjacency(a: &CsrMatrix) -> Result<CsrMatrix> {
    if a.rows() != a.cols() {
        return Err(Error::Shape(format!(
            "adjacency must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();

    // A + I, keeping columns sorted.
    let mut triplets = Vec::with_capacity(a.nnz() + n);
    for i in 0..n {
        for (j, v) in a.iter_row(i) {
            triplets.push((i, j, v));
        }
        triplets.push((i, i, 1.0));
    }
    let with_loops = CsrMatrix::from_coo(n, n, &triplets)?;

    // Degrees in f64 to keep the scaling well conditioned.
    let mut inv_sqrt_deg = vec![0.0f64; n];
    for i in 0..n {
        let deg: f64 = with_loops.iter_row(i).map(|(_, v)| f64::from(v)).sum();
        inv_sqrt_deg[i] = 1.0 / deg.sqrt();
    }

    let mut out = with_loops.clone();
    for i in 0..n {
        let span = out.row_ptr[i]..out.row_ptr[i + 1];
        for idx in span {
            let j = out.col_idx[idx];
            let scaled = f64::from(out.vals[idx]) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
            out.vals[idx] = scaled as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: classic i-j-l triple loop, accumulation over l
    /// ascending, matching the kernel's per-element order.
    fn naive_gemm(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut c = DenseMatrix::zeros(a.rows(), b.cols()).unwrap();
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0f32;
                for l in 0..a.cols() {
                    acc += a.get(i, l) * b.get(l, j);
                }
                c.set(i, j, acc);
            }
        }
        c
    }

    #[test]
    fn gemm_identity_passthrough() {
        let b = DenseMatrix::random_uniform(3, 2, -1.0, 1.0, 3).unwrap();
        let c = dense_gemm(&DenseMatrix::identity(3).unwrap(), &b).unwrap();
        assert_eq!(c, b);
    }

    #[test]
    fn gemm_hand_computed() {
        let a = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DenseMatrix::from_vec(2, 1, vec![5.0, 6.0]).unwrap();
        let c = dense_gemm(&a, &b).unwrap();
        assert_eq!(c.values(), &[17.0, 39.0]);
    }

    #[test]
    fn gemm_matches_independent_oracle_bit_exactly() {
        let a = DenseMatrix::random_uniform(64, 64, -1.0, 1.0, 11).unwrap();
        let b = DenseMatrix::random_uniform(64, 32, -1.0, 1.0, 12).unwrap();
        let c = dense_gemm(&a, &b).unwrap();
        let oracle = naive_gemm(&a, &b);
        assert_eq!(c.values(), oracle.values());
    }

    #[test]
    fn gemm_shape_mismatch_is_error() {
        let a = DenseMatrix::zeros(2, 3).unwrap();
        let b = DenseMatrix::zeros(2, 2).unwrap();
        assert!(matches!(dense_gemm(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn spmm_identity_passthrough() {
        let a = CsrMatrix::identity(4).unwrap();
        let b = DenseMatrix::random_uniform(4, 3, -1.0, 1.0, 4).unwrap();
        let c = spmm_rowwise(&a, &b).unwrap();
        assert_eq!(c, b);
    }

    #[test]
    fn spmm_zero_rows_are_exactly_zero() {
        let a = CsrMatrix::from_coo(4, 4, &[(1, 2, 2.0)]).unwrap();
        let b = DenseMatrix::random_uniform(4, 3, -1.0, 1.0, 5).unwrap();
        let c = spmm_rowwise(&a, &b).unwrap();
        for j in 0..3 {
            assert_eq!(c.get(0, j), 0.0);
            assert_eq!(c.get(2, j), 0.0);
            assert_eq!(c.get(3, j), 0.0);
        }
    }

    #[test]
    fn spmm_matches_densified_gemm() {
        let a = CsrMatrix::random(64, 64, 0.05, 21).unwrap();
        let b = DenseMatrix::random_uniform(64, 32, -1.0, 1.0, 22).unwrap();
        let sparse = spmm_rowwise(&a, &b).unwrap();
        let dense = dense_gemm(&a.to_dense().unwrap(), &b).unwrap();
        assert!(sparse.max_abs_diff(&dense) < 1e-4);
    }

    #[test]
    fn normalize_single_node() {
        let a = CsrMatrix::new_empty(1, 1).unwrap();
        let t = normalize_adjacency(&a).unwrap();
        assert_eq!(t.nnz(), 1);
        assert_eq!(t.get(0, 0), 1.0);
    }

    #[test]
    fn normalize_single_edge() {
        let a = CsrMatrix::from_coo(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let t = normalize_adjacency(&a).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((t.get(i, j) - 0.5).abs() < 1e-6, "entry ({i},{j}) = {}", t.get(i, j));
        }
    }

    #[test]
    fn normalize_path_graph_matches_dense_oracle() {
        // 3-node path 0-1-2.
        let a = CsrMatrix::from_coo(
            3,
            3,
            &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
        )
        .unwrap();
        let t = normalize_adjacency(&a).unwrap().to_dense().unwrap();

        // Dense-arithmetic oracle for D^(-1/2) (A+I) D^(-1/2).
        let deg = [2.0f64, 3.0, 2.0];
        let mut expected = DenseMatrix::zeros(3, 3).unwrap();
        let bar = [
            [1.0, 1.0, 0.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                let v = bar[i][j] / (deg[i].sqrt() * deg[j].sqrt());
                expected.set(i, j, v as f32);
            }
        }
        assert!(t.max_abs_diff(&expected) < 1e-6);

        // Symmetric output with entries in [0, 1].
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.get(i, j) - t.get(j, i)).abs() < 1e-6);
                assert!((0.0..=1.0).contains(&t.get(i, j)));
            }
        }
    }

    #[test]
    fn normalize_rejects_non_square() {
        let a = CsrMatrix::new_empty(2, 3).unwrap();
        assert!(matches!(normalize_adjacency(&a), Err(Error::Shape(_))));
    }

    #[test]
    fn density_of_empty_and_identity() {
        assert_eq!(density(&CsrMatrix::new_empty(10, 10).unwrap()).value(), 0.0);
        assert_eq!(density(&CsrMatrix::identity(10).unwrap()).value(), 0.1);
    }

    #[test]
    fn density_at_citation_graph_scale() {
        // 2708 nodes with ~10k edges lands near 0.14% fill.
        let d = 10266.0 / (2708.0f64 * 2708.0);
        assert!((d - 0.0014).abs() < 1e-4);
    }

    #[test]
    fn from_coo_merges_duplicates_and_drops_zeros() {
        let a = CsrMatrix::from_coo(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 3.0), (1, 1, -3.0)])
            .unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 3.0);
        a.validate().unwrap();
    }

    #[test]
    fn csr_dense_round_trip() {
        let a = CsrMatrix::random(17, 23, 0.2, 7).unwrap();
        let back = CsrMatrix::from_dense(&a.to_dense().unwrap());
        assert_eq!(a, back);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spmm_equals_dense_gemm(rows in 1usize..24, cols in 1usize..24, n in 1usize..12,
                                  density in 0.0f64..0.6, seed in 0u64..1000) {
            let a = CsrMatrix::random(rows, cols, density, seed).unwrap();
            let b = DenseMatrix::random_uniform(cols, n, -1.0, 1.0, seed ^ 0xabcd).unwrap();
            let sparse = spmm_rowwise(&a, &b).unwrap();
            let dense = dense_gemm(&a.to_dense().unwrap(), &b).unwrap();
            prop_assert!(sparse.max_abs_diff(&dense) < 1e-4);
        }

        #[test]
        fn csr_round_trip_is_identity(rows in 1usize..24, cols in 1usize..24,
                                      density in 0.0f64..0.8, seed in 0u64..1000) {
            let a = CsrMatrix::random(rows, cols, density, seed).unwrap();
            let back = CsrMatrix::from_dense(&a.to_dense().unwrap());
            prop_assert_eq!(&a, &back);
            back.validate().unwrap();
        }

        #[test]
        fn normalized_adjacency_is_symmetric_in_unit_range(n in 1usize..20, density in 0.0f64..0.5,
                                                           seed in 0u64..1000) {
            // Symmetrize the pattern first.
            let raw = CsrMatrix::random(n, n, density, seed).unwrap();
            let mut triplets = Vec::new();
            for (r, c, v) in raw.triplets() {
                let v = v.abs().max(0.25);
                triplets.push((r, c, v));
                triplets.push((c, r, v));
            }
            let sym = CsrMatrix::from_coo(n, n, &triplets).unwrap();
            let t = normalize_adjacency(&sym).unwrap().to_dense().unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((t.get(i, j) - t.get(j, i)).abs() < 1e-6);
                    prop_assert!((0.0..=1.0 + 1e-6).contains(&t.get(i, j)));
                }
            }
        }
    }
}
