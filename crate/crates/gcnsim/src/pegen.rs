//! Tile-level engine mapping: slice the (reordered, normalized) adjacency
//! into tile-rows, budget each in-tile row's nonzeros from the per-tile
//! distribution, split the entries into an on-engine share and a scattered
//! residual for the fabric SpMM unit, and pick a dense or sparse tensor PE
//! per tile-row from the padded density.

use crate::error::{Error, Result};
use crate::grouping::{build_grouped, group_rows, GroupedCsr, RowGroups};
use crate::matcore::{dense_gemm, spmm_rowwise, CsrMatrix, DenseMatrix, Density};
use serde::{Deserialize, Serialize};

/// Which entries of an over-budget (row, tile) stay on the engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualRule {
    /// Keep the `budget` largest-magnitude entries, ties to the lower column.
    LargestMagnitude,
    /// Keep the first `budget` entries in column order.
    FirstK,
}

/// Mapping parameters. The defaults mirror the calibrated hardware setup:
/// 64x64 tiles, dense engines above 50% padded density, fabric offload below
/// 1%, grouping threshold 0.3, imbalance ratio 2, coverage percentile 0.9.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanParams {
    pub tile_size: usize,
    /// Imbalance ratio max/ave that switches a row to percentile budgeting.
    pub delta: f64,
    /// Coverage fraction handed to [`find_nnz`].
    pub coverage: f64,
    /// Padded density at or above which a tile-row gets dense tensor PEs.
    pub dense_threshold: f64,
    /// Padded density below which a tile-row is offloaded to the fabric unit.
    pub pl_cutoff: f64,
    /// Grouping threshold for the row-group scan.
    pub tau: f64,
    pub residual_rule: ResidualRule,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            tile_size: 64,
            delta: 2.0,
            coverage: 0.9,
            dense_threshold: 0.5,
            pl_cutoff: 0.01,
            tau: 0.3,
            residual_rule: ResidualRule::LargestMagnitude,
        }
    }
}

impl PlanParams {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::Parameter("tile_size must be at least 1".into()));
        }
        if !(self.delta >= 1.0) {
            return Err(Error::Parameter(format!("delta must be >= 1, got {}", self.delta)));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::Parameter(format!(
                "coverage must be in (0, 1], got {}",
                self.coverage
            )));
        }
        if !(self.dense_threshold > 0.0) {
            return Err(Error::Parameter(format!(
                "dense_threshold must be positive, got {}",
                self.dense_threshold
            )));
        }
        if !(self.pl_cutoff >= 0.0) {
            return Err(Error::Parameter(format!(
                "pl_cutoff must be non-negative, got {}",
                self.pl_cutoff
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Parameter(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Nonzero distribution of one tile-row.
#[derive(Clone, Debug)]
pub struct TileRowStats {
    pub tile_row: usize,
    /// Global row range covered, half-open.
    pub row_range: (usize, usize),
    /// Per in-tile row, per column-tile nonzero counts.
    pub per_row_tile_nnz: Vec<Vec<usize>>,
    /// Per in-tile row mean across tiles.
    pub ave_nnz: Vec<f64>,
    /// Per in-tile row maximum across tiles.
    pub max_nnz: Vec<usize>,
}

/// Count nonzeros per (in-tile row, column tile) for one tile-row.
pub fn tile_row_stats(a: &CsrMatrix, tile_size: usize, tile_row: usize) -> Result<TileRowStats> {
    if tile_size == 0 {
        return Err(Error::Parameter("tile_size must be at least 1".into()));
    }
    let start = tile_row * tile_size;
    if start >= a.rows() {
        return Err(Error::Parameter(format!(
            "tile row {tile_row} starts past the {} matrix rows",
            a.rows()
        )));
    }
    let height = tile_size.min(a.rows() - start);
    let tiles_col = a.cols().div_ceil(tile_size);
    let mut per_row_tile_nnz = vec![vec![0usize; tiles_col]; height];
    for (local, counts) in per_row_tile_nnz.iter_mut().enumerate() {
        for (c, _) in a.iter_row(start + local) {
            counts[c / tile_size] += 1;
        }
    }
    let ave_nnz = per_row_tile_nnz
        .iter()
        .map(|c| c.iter().sum::<usize>() as f64 / tiles_col as f64)
        .collect();
    let max_nnz = per_row_tile_nnz.iter().map(|c| *c.iter().max().unwrap_or(&0)).collect();
    Ok(TileRowStats {
        tile_row,
        row_range: (start, start + height),
        per_row_tile_nnz,
        ave_nnz,
        max_nnz,
    })
}

/// Smallest count `v` such that at least fraction `p` of the tiles hold at
/// most `v` nonzeros.
pub fn find_nnz(nnzs_row: &[usize], p: f64) -> Result<usize> {
    if nnzs_row.is_empty() {
        return Err(Error::Parameter("find_nnz needs a non-empty tile list".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("coverage must be in (0, 1], got {p}")));
    }
    let mut sorted = nnzs_row.to_vec();
    sorted.sort_unstable();
    let idx = (p * sorted.len() as f64).ceil() as usize;
    Ok(sorted[idx.max(1) - 1])
}

/// Engine choice for one tile-row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PeKind {
    /// Dense tensor PEs; the whole tile-row stays on the engines densified.
    Dense,
    /// Sparse tensor PEs with the given per-tile row grouping.
    Sparse(RowGroups),
    /// No nonzeros at all; no work anywhere.
    Empty,
    /// Too scattered for the tensor arrays; everything goes to the residual.
    Offloaded,
}

impl PeKind {
    pub fn name(&self) -> &'static str {
        match self {
            PeKind::Dense => "dense",
            PeKind::Sparse(_) => "sparse",
            PeKind::Empty => "empty",
            PeKind::Offloaded => "offloaded",
        }
    }
}

/// One tile-row's mapping decision and on-engine operand.
#[derive(Clone, Debug)]
pub struct PeAssignment {
    pub tile_row: usize,
    pub row_range: (usize, usize),
    pub kind: PeKind,
    /// Per in-tile row nonzero budget (per column tile).
    pub nnz_budget: Vec<usize>,
    /// Mean executed density of the occupied column tiles under the
    /// budget-derived grouping; the dense/sparse/offload criterion.
    pub padded_density: Density,
    /// Kept entries per column tile.
    pub kept_per_tile: Vec<usize>,
    /// Entries a sparse engine executes per column tile: every row of a
    /// group runs the group's trip count for that tile (the largest kept
    /// count among the group's rows there), padding included.
    pub executed_per_tile: Vec<usize>,
    /// Entries kept on the engines, as a height x cols matrix.
    pub kept: CsrMatrix,
    /// Residual entries contributed by this tile-row.
    pub residual_nnz: usize,
    /// Padded operand for sparse tensor PEs.
    pub grouped: Option<GroupedCsr>,
}

impl PeAssignment {
    pub fn kept_nnz(&self) -> usize {
        self.kept.nnz()
    }

    pub fn height(&self) -> usize {
        self.row_range.1 - self.row_range.0
    }

    /// Column tiles holding at least one kept entry.
    pub fn occupied_tiles(&self) -> usize {
        self.kept_per_tile.iter().filter(|&&c| c > 0).count()
    }

    /// Total trip-count work of the padded sparse kernels.
    pub fn executed_entries(&self) -> usize {
        self.executed_per_tile.iter().sum()
    }
}

/// Counts of tile-rows per engine kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub dense: usize,
    pub sparse: usize,
    pub empty: usize,
    pub offloaded: usize,
}

/// Complete mapping of a matrix onto the engine array plus the fabric
/// residual. Kept entries and residual entries partition the source matrix
/// exactly, bit for bit.
#[derive(Clone, Debug)]
pub struct PePlan {
    pub tile_size: usize,
    pub rows: usize,
    pub cols: usize,
    pub params: PlanParams,
    pub source_nnz: usize,
    pub assignments: Vec<PeAssignment>,
    pub residual: CsrMatrix,
}

impl PePlan {
    pub fn kept_nnz(&self) -> usize {
        self.assignments.iter().map(|a| a.kept_nnz()).sum()
    }

    pub fn residual_nnz(&self) -> usize {
        self.residual.nnz()
    }

    pub fn kind_counts(&self) -> KindCounts {
        let mut counts = KindCounts::default();
        for a in &self.assignments {
            match a.kind {
                PeKind::Dense => counts.dense += 1,
                PeKind::Sparse(_) => counts.sparse += 1,
                PeKind::Empty => counts.empty += 1,
                PeKind::Offloaded => counts.offloaded += 1,
            }
        }
        counts
    }

    /// Fraction of generated tensor PEs that are sparse.
    pub fn sparse_pe_fraction(&self) -> f64 {
        let c = self.kind_counts();
        if c.dense + c.sparse == 0 {
            return 0.0;
        }
        c.sparse as f64 / (c.dense + c.sparse) as f64
    }

    /// Mean padded density over tile-rows that carry engine work.
    pub fn mean_padded_density(&self) -> f64 {
        let engine: Vec<f64> = self
            .assignments
            .iter()
            .filter(|a| matches!(a.kind, PeKind::Dense | PeKind::Sparse(_)))
            .map(|a| a.padded_density.value())
            .collect();
        if engine.is_empty() {
            return 0.0;
        }
        engine.iter().sum::<f64>() / engine.len() as f64
    }

    pub fn report(&self) -> PlanReport {
        PlanReport::from_plan(self)
    }
}

/// Serializable plan summary: parameters, per-tile-row decisions with group
/// tables, and the residual count. The residual matrix itself goes to the
/// binary sidecar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanReport {
    pub rows: usize,
    pub cols: usize,
    pub tile_size: usize,
    pub params: PlanParams,
    pub source_nnz: usize,
    pub source_density: f64,
    pub tile_rows: Vec<TileRowReport>,
    pub summary: PlanSummary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TileRowReport {
    pub tile_row: usize,
    pub kind: String,
    pub rows: (usize, usize),
    pub kept_nnz: usize,
    pub residual_nnz: usize,
    pub executed_nnz: usize,
    pub padded_density: f64,
    pub occupied_tiles: usize,
    /// (start_row, end_row, fixed_nnz) per group for sparse tile-rows.
    pub groups: Option<Vec<(usize, usize, usize)>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanSummary {
    pub kinds: KindCounts,
    pub sparse_pe_fraction: f64,
    pub kept_nnz: usize,
    pub residual_nnz: usize,
    pub residual_share: f64,
    pub mean_padded_density: f64,
}

impl PlanReport {
    fn from_plan(plan: &PePlan) -> Self {
        let tile_rows = plan
            .assignments
            .iter()
            .map(|a| TileRowReport {
                tile_row: a.tile_row,
                kind: a.kind.name().to_string(),
                rows: a.row_range,
                kept_nnz: a.kept_nnz(),
                residual_nnz: a.residual_nnz,
                executed_nnz: a.executed_entries(),
                padded_density: a.padded_density.value(),
                occupied_tiles: a.occupied_tiles(),
                groups: match &a.kind {
                    PeKind::Sparse(g) => Some(
                        g.boundaries
                            .iter()
                            .zip(&g.fixed_nnz)
                            .map(|(&(s, e), &f)| (s, e, f))
                            .collect(),
                    ),
                    _ => None,
                },
            })
            .collect();
        let kept = plan.kept_nnz();
        let residual = plan.residual_nnz();
        PlanReport {
            rows: plan.rows,
            cols: plan.cols,
            tile_size: plan.tile_size,
            params: plan.params,
            source_nnz: plan.source_nnz,
            source_density: plan.source_nnz as f64 / (plan.rows as f64 * plan.cols as f64),
            tile_rows,
            summary: PlanSummary {
                kinds: plan.kind_counts(),
                sparse_pe_fraction: plan.sparse_pe_fraction(),
                kept_nnz: kept,
                residual_nnz: residual,
                residual_share: if plan.source_nnz == 0 {
                    0.0
                } else {
                    residual as f64 / plan.source_nnz as f64
                },
                mean_padded_density: plan.mean_padded_density(),
            },
        }
    }
}

/// Generate the full mapping of `a` onto engines plus residual.
///
/// Per tile-row: count per-tile nonzeros of every in-tile row; budget the
/// row at its per-tile maximum, or at the coverage percentile when the
/// max/mean imbalance reaches `delta` (falling back to the maximum when the
/// percentile yields no usable budget, i.e. zero); trim everything beyond
/// the budget per (row, tile) into the residual; group the budgets; then
/// decide the engine kind from the padded per-tile density. Dense tile-rows
/// keep all their entries on the engines; tile-rows below the offload
/// cutoff send everything to the residual. The last tile-row may be ragged
/// and is processed with its true height.
pub fn generate_pe_plan(a: &CsrMatrix, params: &PlanParams) -> Result<PePlan> {
    params.validate()?;
    let ts = params.tile_size;
    let tiles_col = a.cols().div_ceil(ts);
    let n_tile_rows = a.rows().div_ceil(ts);

    let mut assignments = Vec::with_capacity(n_tile_rows);
    let mut residual_triplets: Vec<(usize, usize, f32)> = Vec::new();

    for tile_row in 0..n_tile_rows {
        let stats = tile_row_stats(a, ts, tile_row)?;
        let (start, end) = stats.row_range;
        let height = end - start;
        let total_nnz: usize = stats.per_row_tile_nnz.iter().flatten().sum();

        if total_nnz == 0 {
            assignments.push(PeAssignment {
                tile_row,
                row_range: stats.row_range,
                kind: PeKind::Empty,
                nnz_budget: vec![0; height],
                padded_density: Density::new(0.0)?,
                kept_per_tile: vec![0; tiles_col],
                executed_per_tile: vec![0; tiles_col],
                kept: CsrMatrix::new_empty(height, a.cols())?,
                residual_nnz: 0,
                grouped: None,
            });
            continue;
        }

        let mut budgets = Vec::with_capacity(height);
        for j in 0..height {
            let counts = &stats.per_row_tile_nnz[j];
            let row_total: usize = counts.iter().sum();
            if row_total == 0 {
                budgets.push(0);
                continue;
            }
            let max_nnz = stats.max_nnz[j];
            let budget = if max_nnz as f64 / stats.ave_nnz[j] >= params.delta {
                match find_nnz(counts, params.coverage)? {
                    // A zero percentile would offload the whole row; fall
                    // back to the maximum, the "no suitable count" case.
                    0 => max_nnz,
                    v => v,
                }
            } else {
                max_nnz
            };
            budgets.push(budget);
        }

        // Split each (row, tile) at its budget.
        let mut kept_triplets: Vec<(usize, usize, f32)> = Vec::new();
        let mut trimmed_triplets: Vec<(usize, usize, f32)> = Vec::new();
        let mut tile_entries: Vec<(usize, f32)> = Vec::new();
        for j in 0..height {
            let row_entries: Vec<(usize, f32)> = a.iter_row(start + j).collect();
            let mut i = 0usize;
            while i < row_entries.len() {
                let tile = row_entries[i].0 / ts;
                tile_entries.clear();
                while i < row_entries.len() && row_entries[i].0 / ts == tile {
                    tile_entries.push(row_entries[i]);
                    i += 1;
                }
                let budget = budgets[j];
                if tile_entries.len() <= budget {
                    kept_triplets.extend(tile_entries.iter().map(|&(c, v)| (j, c, v)));
                    continue;
                }
                match params.residual_rule {
                    ResidualRule::FirstK => {
                        kept_triplets
                            .extend(tile_entries[..budget].iter().map(|&(c, v)| (j, c, v)));
                        trimmed_triplets.extend(
                            tile_entries[budget..].iter().map(|&(c, v)| (start + j, c, v)),
                        );
                    }
                    ResidualRule::LargestMagnitude => {
                        let mut ranked: Vec<usize> = (0..tile_entries.len()).collect();
                        ranked.sort_by(|&x, &y| {
                            tile_entries[y]
                                .1
                                .abs()
                                .total_cmp(&tile_entries[x].1.abs())
                                .then(tile_entries[x].0.cmp(&tile_entries[y].0))
                        });
                        let mut keep = ranked[..budget].to_vec();
                        keep.sort_unstable();
                        let mut keep_iter = keep.iter().peekable();
                        for (idx, &(c, v)) in tile_entries.iter().enumerate() {
                            if keep_iter.peek() == Some(&&idx) {
                                keep_iter.next();
                                kept_triplets.push((j, c, v));
                            } else {
                                trimmed_triplets.push((start + j, c, v));
                            }
                        }
                    }
                }
            }
        }

        let groups = group_rows(&budgets, params.tau)?;
        let kept = CsrMatrix::from_coo(height, a.cols(), &kept_triplets)?;
        let kept_per_tile = per_tile_counts(&kept, ts, tiles_col);
        let executed_per_tile = tile_trip_work(&kept, &groups, ts, tiles_col);

        // Decision density: executed entries over the area of the occupied
        // tiles. This is the density the padded kernels actually run at, so
        // the dense threshold lands exactly on the cost tables' dense/sparse
        // crossover.
        let tile_width = |t: usize| ts.min(a.cols() - t * ts);
        let occupied_area: usize = executed_per_tile
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(t, _)| height * tile_width(t))
            .sum();
        let executed: usize = executed_per_tile.iter().sum();
        let padded_density = Density::new(if occupied_area == 0 {
            0.0
        } else {
            executed as f64 / occupied_area as f64
        })?;

        if padded_density.value() >= params.dense_threshold {
            // Dense engines take the whole tile-row; nothing is trimmed.
            let mut all: Vec<(usize, usize, f32)> = Vec::with_capacity(total_nnz);
            for j in 0..height {
                all.extend(a.iter_row(start + j).map(|(c, v)| (j, c, v)));
            }
            let kept = CsrMatrix::from_coo(height, a.cols(), &all)?;
            let kept_per_tile = per_tile_counts(&kept, ts, tiles_col);
            assignments.push(PeAssignment {
                tile_row,
                row_range: stats.row_range,
                kind: PeKind::Dense,
                nnz_budget: budgets,
                padded_density,
                kept_per_tile,
                executed_per_tile: vec![0; tiles_col],
                kept,
                residual_nnz: 0,
                grouped: None,
            });
        } else if padded_density.value() < params.pl_cutoff {
            // Scattered tile-row: the fabric unit handles it entirely.
            for j in 0..height {
                residual_triplets.extend(a.iter_row(start + j).map(|(c, v)| (start + j, c, v)));
            }
            assignments.push(PeAssignment {
                tile_row,
                row_range: stats.row_range,
                kind: PeKind::Offloaded,
                nnz_budget: budgets,
                padded_density,
                kept_per_tile: vec![0; tiles_col],
                executed_per_tile: vec![0; tiles_col],
                kept: CsrMatrix::new_empty(height, a.cols())?,
                residual_nnz: total_nnz,
                grouped: None,
            });
        } else {
            // The per-tile budget repeats across every column tile, so the
            // executable operand pads each row to fixed * tiles_col.
            let grouped = build_grouped(&kept, &groups.scaled(tiles_col))?;
            let residual_here = trimmed_triplets.len();
            residual_triplets.append(&mut trimmed_triplets);
            assignments.push(PeAssignment {
                tile_row,
                row_range: stats.row_range,
                kind: PeKind::Sparse(groups),
                nnz_budget: budgets,
                padded_density,
                kept_per_tile,
                executed_per_tile,
                kept,
                residual_nnz: residual_here,
                grouped: Some(grouped),
            });
        }
    }

    let residual = CsrMatrix::from_coo(a.rows(), a.cols(), &residual_triplets)?;
    Ok(PePlan {
        tile_size: ts,
        rows: a.rows(),
        cols: a.cols(),
        params: *params,
        source_nnz: a.nnz(),
        assignments,
        residual,
    })
}

fn per_tile_counts(kept: &CsrMatrix, tile_size: usize, tiles_col: usize) -> Vec<usize> {
    let mut counts = vec![0usize; tiles_col];
    for r in 0..kept.rows() {
        for (c, _) in kept.iter_row(r) {
            counts[c / tile_size] += 1;
        }
    }
    counts
}

/// Trip-count work of the fixed-inner-loop kernels, per column tile: within
/// each (group, tile), every row executes the group's largest kept count for
/// that tile, padding included.
fn tile_trip_work(
    kept: &CsrMatrix,
    groups: &RowGroups,
    tile_size: usize,
    tiles_col: usize,
) -> Vec<usize> {
    let mut counts = vec![0usize; tiles_col];
    let mut trips = vec![0usize; tiles_col];
    let mut work = vec![0usize; tiles_col];
    for &(s, e) in &groups.boundaries {
        trips.iter_mut().for_each(|t| *t = 0);
        for r in s..e {
            counts.iter_mut().for_each(|c| *c = 0);
            for (c, _) in kept.iter_row(r) {
                counts[c / tile_size] += 1;
            }
            for (t, &c) in counts.iter().enumerate() {
                trips[t] = trips[t].max(c);
            }
        }
        for (t, &trip) in trips.iter().enumerate() {
            work[t] += (e - s) * trip;
        }
    }
    work
}

/// Run the planned split numerically: every engine tile-row contributes its
/// kept share (dense GEMM on the densified tile-row, or the grouped sparse
/// kernel), the residual goes through the plain row-wise product, and the
/// sum equals the unsplit product.
pub fn execute_plan_functional(plan: &PePlan, b: &DenseMatrix) -> Result<DenseMatrix> {
    if plan.cols != b.rows() {
        return Err(Error::Shape(format!(
            "plan over {}x{} cannot multiply a {}x{} matrix",
            plan.rows,
            plan.cols,
            b.rows(),
            b.cols()
        )));
    }
    let mut out = DenseMatrix::zeros(plan.rows, b.cols())?;
    for asg in &plan.assignments {
        let part = match &asg.kind {
            PeKind::Empty | PeKind::Offloaded => continue,
            PeKind::Dense => dense_gemm(&asg.kept.to_dense()?, b)?,
            PeKind::Sparse(_) => {
                let grouped =
                    asg.grouped.as_ref().expect("sparse assignments carry a grouped operand");
                crate::grouping::spmm_grouped(grouped, b)?
            }
        };
        let (r0, r1) = asg.row_range;
        for (local, global) in (r0..r1).enumerate() {
            out.row_mut(global).copy_from_slice(part.row(local));
        }
    }
    if plan.residual.nnz() > 0 {
        let resid = spmm_rowwise(&plan.residual, b)?;
        out.add_assign(&resid)?;
    }
    Ok(out)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn entry_multiset(m: &CsrMatrix, row_offset: usize) -> Vec<(usize, usize, u32)> {
        let mut v: Vec<(usize, usize, u32)> = m
            .triplets()
            .into_iter()
            .map(|(r, c, val)| (r + row_offset, c, val.to_bits()))
            .collect();
        v.sort_unstable();
        v
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn split_is_always_lossless(rows in 1usize..90, cols in 1usize..90,
                                    density in 0.0f64..0.5, seed in 0u64..400,
                                    tile_size in 1usize..40,
                                    delta in 1.0f64..4.0, coverage in 0.05f64..1.0,
                                    dense_threshold in 0.05f64..1.0,
                                    pl_cutoff in 0.0f64..0.2, tau in 0.05f64..2.0) {
            let a = CsrMatrix::random(rows, cols, density, seed).unwrap();
            let params = PlanParams {
                tile_size, delta, coverage, dense_threshold, pl_cutoff, tau,
                residual_rule: ResidualRule::LargestMagnitude,
            };
            let plan = generate_pe_plan(&a, &params).unwrap();
            let mut got = Vec::new();
            for asg in &plan.assignments {
                got.extend(entry_multiset(&asg.kept, asg.row_range.0));
            }
            got.extend(entry_multiset(&plan.residual, 0));
            got.sort_unstable();
            prop_assert_eq!(got, entry_multiset(&a, 0));
        }

        #[test]
        fn balanced_rows_contribute_no_residual(seed in 0u64..200) {
            // When no row trips the imbalance test the budget is the row max
            // and the engines keep everything (unless a tile-row offloads
            // wholesale, which moves all of it, never part).
            let a = CsrMatrix::random(80, 80, 0.15, seed).unwrap();
            let params = PlanParams { delta: 1e9, pl_cutoff: 0.0, ..PlanParams::default() };
            let plan = generate_pe_plan(&a, &params).unwrap();
            prop_assert_eq!(plan.residual_nnz(), 0);
        }

        #[test]
        fn plans_are_deterministic(seed in 0u64..200) {
            let a = CsrMatrix::random(70, 70, 0.1, seed).unwrap();
            let p1 = generate_pe_plan(&a, &PlanParams::default()).unwrap();
            let p2 = generate_pe_plan(&a, &PlanParams::default()).unwrap();
            prop_assert_eq!(serde_json::to_string(&p1.report()).unwrap(),
                            serde_json::to_string(&p2.report()).unwrap());
        }

        #[test]
        fn functional_execution_matches_the_oracle(rows in 1usize..80, density in 0.0f64..0.4,
                                                   n in 1usize..6, seed in 0u64..300) {
            let a = CsrMatrix::random(rows, rows, density, seed).unwrap();
            let plan = generate_pe_plan(&a, &PlanParams::default()).unwrap();
            let b = DenseMatrix::random_uniform(rows, n, -1.0, 1.0, seed ^ 0xf00d).unwrap();
            let got = execute_plan_functional(&plan, &b).unwrap();
            let want = spmm_rowwise(&a, &b).unwrap();
            prop_assert!(got.max_abs_diff(&want) < 1e-4);
        }
    }
}
