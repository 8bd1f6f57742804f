//! Vertex reordering for community locality, plus block-density diagnostics
//! and a synthetic community-graph generator for tests and fixtures.
//!
//! Real graphs cluster: grouping vertices that share neighbors concentrates
//! the adjacency matrix near the diagonal, which is what the downstream
//! tile mapper feeds on. The built-in heuristic is greedy label propagation
//! (a fixed number of sweeps, deterministic tie-breaking) followed by a
//! cluster layout: clusters in decreasing size, vertices within a cluster in
//! decreasing degree. External orderings can be injected from a permutation
//! file instead.

use crate::error::{Error, Result};
use crate::matcore::{CsrMatrix, DenseMatrix, Density};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

const LABEL_PROP_SWEEPS: usize = 10;

/// A vertex relabeling with both directions materialized.
/// `forward[old] = new`, `inverse[new] = old`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        let forward: Vec<usize> = (0..n).collect();
        Self { inverse: forward.clone(), forward }
    }

    /// Build from a forward map, verifying it is a bijection on [0, n).
    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (old, &new) in forward.iter().enumerate() {
            if new >= n {
                return Err(Error::Validation(format!(
                    "permutation maps {old} to {new}, outside [0, {n})"
                )));
            }
            if inverse[new] != usize::MAX {
                return Err(Error::Validation(format!(
                    "permutation maps both {} and {old} to {new}",
                    inverse[new]
                )));
            }
            inverse[new] = old;
        }
        Ok(Self { forward, inverse })
    }

    /// Uniformly random permutation, reproducible per seed.
    pub fn shuffled(n: usize, seed: u64) -> Self {
        let mut forward: Vec<usize> = (0..n).collect();
        forward.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self::from_forward(forward).expect("a shuffle is always a bijection")
    }

    pub fn n(&self) -> usize {
        self.forward.len()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// The permutation mapping new indices back to old ones.
    pub fn inverted(&self) -> Self {
        Self { forward: self.inverse.clone(), inverse: self.forward.clone() }
    }

    /// Serialize as a JSON array of new-index-by-old-index.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.forward)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Load and validate a JSON array of new-index-by-old-index.
    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let forward: Vec<usize> = serde_json::from_str(&text)?;
        Self::from_forward(forward)
    }
}

/// Densities of the diagonal blocks of a matrix plus the aggregate density
/// of everything off those blocks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockProfile {
    pub block_size: usize,
    pub diag_densities: Vec<Density>,
    pub offdiag_density: Density,
}

impl BlockProfile {
    pub fn mean_diag_density(&self) -> f64 {
        if self.diag_densities.is_empty() {
            return 0.0;
        }
        self.diag_densities.iter().map(|d| d.value()).sum::<f64>()
            / self.diag_densities.len() as f64
    }
}

/// Community-structured random graph: vertices split into `k` equal
/// communities (remainder to the last one); each vertex pair inside a
/// community (including the diagonal) is connected with probability `p_in`,
/// pairs across communities with `p_out`. Output is symmetric, unweighted,
/// and reproducible per seed.
pub fn gen_sbm(n: usize, k: usize, p_in: f64, p_out: f64, seed: u64) -> Result<CsrMatrix> {
    if n == 0 {
        return Err(Error::Parameter("graph needs at least one vertex".into()));
    }
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("need 1 <= communities <= {n}, got {k}")));
    }
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::Parameter(format!("{name} = {p} outside [0, 1]")));
        }
    }
    if p_out > p_in {
        return Err(Error::Parameter(format!(
            "p_out ({p_out}) must not exceed p_in ({p_in})"
        )));
    }

    let base = n / k;
    let mut starts = Vec::with_capacity(k + 1);
    for c in 0..k {
        starts.push(c * base);
    }
    starts.push(n);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets: Vec<(usize, usize, f32)> = Vec::new();
    let push_edge = |a: usize, b: usize, triplets: &mut Vec<(usize, usize, f32)>| {
        triplets.push((a, b, 1.0));
        if a != b {
            triplets.push((b, a, 1.0));
        }
    };

    for ci in 0..k {
        let (s0, e0) = (starts[ci], starts[ci + 1]);
        let size_i = e0 - s0;

        // Intra-community pairs a <= b, diagonal included.
        let pair_count = size_i * (size_i + 1) / 2;
        for idx in sample_indices(&mut rng, pair_count, p_in) {
            let (a, b) = triangular_unrank(idx, size_i);
            push_edge(s0 + a, s0 + b, &mut triplets);
        }

        // Cross-community rectangles.
        for cj in (ci + 1)..k {
            let (s1, e1) = (starts[cj], starts[cj + 1]);
            let size_j = e1 - s1;
            for idx in sample_indices(&mut rng, size_i * size_j, p_out) {
                push_edge(s0 + idx / size_j, s1 + idx % size_j, &mut triplets);
            }
        }
    }

    CsrMatrix::from_coo(n, n, &triplets)
}

/// Bernoulli(p) hits over [0, count) via geometric gap sampling, O(hits).
fn sample_indices(rng: &mut ChaCha8Rng, count: usize, p: f64) -> Vec<usize> {
    if count == 0 || p <= 0.0 {
        return Vec::new();
    }
    if p >= 1.0 {
        return (0..count).collect();
    }
    let log_q = (1.0 - p).ln();
    let mut hits = Vec::with_capacity((count as f64 * p * 1.2) as usize + 4);
    let mut pos = 0usize;
    loop {
        let u: f64 = rng.gen();
        let gap = ((1.0 - u).ln() / log_q).floor() as usize;
        pos = match pos.checked_add(gap) {
            Some(p) => p,
            None => break,
        };
        if pos >= count {
            break;
        }
        hits.push(pos);
        pos += 1;
    }
    hits
}

/// Map a flat index into the upper triangle (diagonal included) of an s*s
/// block back to (row, col) with row <= col.
fn triangular_unrank(idx: usize, s: usize) -> (usize, usize) {
    // Row a starts at offset a*s - a*(a-1)/2, rearranged to stay in usize.
    let offset = |a: usize| a * (2 * s + 1 - a) / 2;
    let mut a = {
        let sf = s as f64;
        let disc = (2.0 * sf + 1.0) * (2.0 * sf + 1.0) - 8.0 * idx as f64;
        (((2.0 * sf + 1.0) - disc.max(0.0).sqrt()) / 2.0).floor() as usize
    };
    while a + 1 <= s && offset(a + 1) <= idx {
        a += 1;
    }
    while a > 0 && offset(a) > idx {
        a -= 1;
    }
    (a, a + (idx - offset(a)))
}

/// Discover clusters by label propagation and lay them out contiguously.
///
/// Vertices start with their own index as label; ten synchronous sweeps
/// adopt each vertex's most frequent neighbor label, ties broken by the
/// lower label. Synchronous updates keep a label from flooding farther than
/// one hop per sweep, so a community's plurality always outvotes the few
/// cross-community edges. Clusters are emitted in decreasing size and their
/// vertices in decreasing degree (ties by lower vertex id).
///
/// The result is fully deterministic; `parts` and `seed` are validated and
/// recorded by callers but do not steer the heuristic, which discovers the
/// cluster count on its own. Partitioners that need an exact part count can
/// be injected through a permutation file instead.
pub fn reorder_graph(a: &CsrMatrix, parts: usize, _seed: u64) -> Result<Permutation> {
    if a.rows() != a.cols() {
        return Err(Error::Shape(format!(
            "reordering needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if parts < 1 {
        return Err(Error::Parameter("parts must be at least 1".into()));
    }
    let n = a.rows();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut next = labels.clone();

    let mut neighbor_labels: Vec<usize> = Vec::new();
    for _ in 0..LABEL_PROP_SWEEPS {
        let mut changed = false;
        for v in 0..n {
            neighbor_labels.clear();
            neighbor_labels.extend(a.iter_row(v).map(|(c, _)| labels[c]));
            if neighbor_labels.is_empty() {
                next[v] = labels[v];
                continue;
            }
            neighbor_labels.sort_unstable();
            let mut best_label = usize::MAX;
            let mut best_count = 0usize;
            let mut i = 0;
            while i < neighbor_labels.len() {
                let l = neighbor_labels[i];
                let mut j = i;
                while j < neighbor_labels.len() && neighbor_labels[j] == l {
                    j += 1;
                }
                // Strictly larger count wins; sorted order handles label ties.
                if j - i > best_count {
                    best_count = j - i;
                    best_label = l;
                }
                i = j;
            }
            next[v] = best_label;
            if best_label != labels[v] {
                changed = true;
            }
        }
        std::mem::swap(&mut labels, &mut next);
        if !changed {
            break;
        }
    }

    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..n {
        clusters.entry(labels[v]).or_default().push(v);
    }
    let mut cluster_list: Vec<(usize, Vec<usize>)> = clusters.into_iter().collect();
    cluster_list.sort_by(|(la, ma), (lb, mb)| mb.len().cmp(&ma.len()).then(la.cmp(lb)));

    let mut forward = vec![0usize; n];
    let mut pos = 0usize;
    for (_, mut members) in cluster_list {
        members.sort_by(|&x, &y| a.row_nnz(y).cmp(&a.row_nnz(x)).then(x.cmp(&y)));
        for v in members {
            forward[v] = pos;
            pos += 1;
        }
    }
    Permutation::from_forward(forward)
}

/// Symmetric relabeling P * A * P^T: entry (i, j) moves to
/// (forward[i], forward[j]). Structure and values are untouched.
pub fn apply_permutation(a: &CsrMatrix, p: &Permutation) -> Result<CsrMatrix> {
    if p.n() != a.rows() || a.rows() != a.cols() {
        return Err(Error::Shape(format!(
            "permutation on {} indices does not fit a {}x{} matrix",
            p.n(),
            a.rows(),
            a.cols()
        )));
    }
    let triplets: Vec<(usize, usize, f32)> = a
        .triplets()
        .into_iter()
        .map(|(i, j, v)| (p.forward[i], p.forward[j], v))
        .collect();
    CsrMatrix::from_coo(a.rows(), a.cols(), &triplets)
}

/// Reorder the rows of a dense matrix: row i moves to forward[i].
pub fn permute_rows(m: &DenseMatrix, p: &Permutation) -> Result<DenseMatrix> {
    if p.n() != m.rows() {
        return Err(Error::Shape(format!(
            "permutation on {} indices does not fit {} rows",
            p.n(),
            m.rows()
        )));
    }
    let mut out = DenseMatrix::zeros(m.rows(), m.cols())?;
    for i in 0..m.rows() {
        out.row_mut(p.forward[i]).copy_from_slice(m.row(i));
    }
    Ok(out)
}

/// Densities of the ceil(n / block_size) diagonal blocks and of the
/// off-diagonal remainder. Self-loops count like any other stored entry;
/// normalize first to profile the matrix the engines actually consume.
pub fn block_density_profile(a: &CsrMatrix, block_size: usize) -> Result<BlockProfile> {
    if block_size == 0 {
        return Err(Error::Parameter("block size must be at least 1".into()));
    }
    let n = a.rows();
    let blocks = n.div_ceil(block_size);
    let mut diag_counts = vec![0usize; blocks];
    for i in 0..n {
        let b = i / block_size;
        let lo = b * block_size;
        let hi = ((b + 1) * block_size).min(n);
        for (j, _) in a.iter_row(i) {
            if j >= lo && j < hi {
                diag_counts[b] += 1;
            }
        }
    }

    let mut diag_area_total = 0usize;
    let mut diag_densities = Vec::with_capacity(blocks);
    for (b, &count) in diag_counts.iter().enumerate() {
        let h = ((b + 1) * block_size).min(n) - b * block_size;
        diag_area_total += h * h;
        diag_densities.push(Density::new(count as f64 / (h * h) as f64)?);
    }
    let total_cells = n * a.cols();
    let off_cells = total_cells - diag_area_total;
    let off_nnz = a.nnz() - diag_counts.iter().sum::<usize>();
    let offdiag_density = if off_cells == 0 {
        Density::new(0.0)?
    } else {
        Density::new(off_nnz as f64 / off_cells as f64)?
    };
    Ok(BlockProfile { block_size, diag_densities, offdiag_density })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_full_intra_zero_inter_gives_two_dense_blocks() {
        let a = gen_sbm(8, 2, 1.0, 0.0, 1).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let same = (i < 4) == (j < 4);
                assert_eq!(a.get(i, j) != 0.0, same, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn sbm_zero_probabilities_give_empty_graph() {
        let a = gen_sbm(16, 4, 0.0, 0.0, 1).unwrap();
        assert_eq!(a.nnz(), 0);
    }

    #[test]
    fn sbm_is_deterministic_and_symmetric() {
        let a = gen_sbm(100, 5, 0.4, 0.02, 9).unwrap();
        let b = gen_sbm(100, 5, 0.4, 0.02, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.pattern_is_symmetric());
    }

    #[test]
    fn sbm_edge_counts_match_binomial_expectation() {
        let (n, k, p_in, p_out) = (512usize, 8usize, 0.3f64, 0.01f64);
        let a = gen_sbm(n, k, p_in, p_out, 7).unwrap();
        let s = n / k;
        let community = |v: usize| (v / s).min(k - 1);

        let mut intra = 0usize;
        let mut inter = 0usize;
        for (i, j, _) in a.triplets() {
            if i > j {
                continue;
            }
            if community(i) == community(j) {
                intra += 1;
            } else {
                inter += 1;
            }
        }

        let intra_pairs = (k * (s * (s + 1) / 2)) as f64;
        let inter_pairs = ((n * (n - 1) / 2) - k * (s * (s - 1) / 2)) as f64;
        let (e_intra, sd_intra) = (intra_pairs * p_in, (intra_pairs * p_in * (1.0 - p_in)).sqrt());
        let (e_inter, sd_inter) = (inter_pairs * p_out, (inter_pairs * p_out * (1.0 - p_out)).sqrt());
        assert!((intra as f64 - e_intra).abs() < 3.0 * sd_intra, "intra {intra} vs {e_intra}");
        assert!((inter as f64 - e_inter).abs() < 3.0 * sd_inter, "inter {inter} vs {e_inter}");
    }

    #[test]
    fn sbm_rejects_bad_probabilities() {
        assert!(gen_sbm(8, 2, 0.1, 0.5, 1).is_err());
        assert!(gen_sbm(8, 2, 1.5, 0.0, 1).is_err());
        assert!(gen_sbm(8, 9, 0.5, 0.0, 1).is_err());
    }

    #[test]
    fn triangular_unrank_covers_the_triangle() {
        let s = 7;
        let mut seen = std::collections::BTreeSet::new();
        for idx in 0..s * (s + 1) / 2 {
            let (a, b) = triangular_unrank(idx, s);
            assert!(a <= b && b < s);
            assert!(seen.insert((a, b)));
        }
    }

    #[test]
    fn reordering_an_already_ordered_graph_keeps_block_density() {
        let a = gen_sbm(128, 4, 0.6, 0.0, 3).unwrap();
        let before = block_density_profile(&a, 32).unwrap().mean_diag_density();
        let p = reorder_graph(&a, 4, 11).unwrap();
        let after =
            block_density_profile(&apply_permutation(&a, &p).unwrap(), 32).unwrap().mean_diag_density();
        assert!(after >= before * 0.99, "before {before}, after {after}");
    }

    #[test]
    fn reordering_recovers_shuffled_cliques_exactly() {
        let a = gen_sbm(16, 2, 1.0, 0.0, 5).unwrap();
        let shuffle = Permutation::shuffled(16, 99);
        let shuffled = apply_permutation(&a, &shuffle).unwrap();
        let p = reorder_graph(&shuffled, 2, 17).unwrap();
        let restored = apply_permutation(&shuffled, &p).unwrap();
        let profile = block_density_profile(&restored, 8).unwrap();
        assert_eq!(profile.diag_densities.len(), 2);
        for d in &profile.diag_densities {
            assert_eq!(d.value(), 1.0);
        }
        assert_eq!(profile.offdiag_density.value(), 0.0);
    }

    #[test]
    fn apply_identity_is_a_noop_and_inverse_round_trips() {
        let a = gen_sbm(40, 4, 0.5, 0.05, 13).unwrap();
        assert_eq!(apply_permutation(&a, &Permutation::identity(40)).unwrap(), a);

        let p = Permutation::shuffled(40, 14);
        let there = apply_permutation(&a, &p).unwrap();
        let back = apply_permutation(&there, &p.inverted()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn permutation_moves_entries_where_expected() {
        let a = CsrMatrix::random(20, 20, 0.2, 15).unwrap();
        let p = Permutation::shuffled(20, 16);
        let b = apply_permutation(&a, &p).unwrap();
        let ad = a.to_dense().unwrap();
        let bd = b.to_dense().unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(bd.get(p.forward()[i], p.forward()[j]), ad.get(i, j));
            }
        }
    }

    #[test]
    fn identity_matrix_profile() {
        let a = CsrMatrix::identity(12).unwrap();
        let profile = block_density_profile(&a, 12).unwrap();
        assert_eq!(profile.diag_densities.len(), 1);
        assert!((profile.diag_densities[0].value() - 1.0 / 12.0).abs() < 1e-12);
        assert_eq!(profile.offdiag_density.value(), 0.0);
    }

    #[test]
    fn sbm_intra_block_density_tracks_p_in() {
        let (n, k, p_in) = (512usize, 8usize, 0.3f64);
        let a = gen_sbm(n, k, p_in, 0.01, 7).unwrap();
        let profile = block_density_profile(&a, n / k).unwrap();
        let cells = ((n / k) * (n / k) * k) as f64;
        let sd = (cells * p_in * (1.0 - p_in)).sqrt() / cells;
        assert!(
            (profile.mean_diag_density() - p_in).abs() < 3.0 * sd + 1.0 / (n / k) as f64,
            "mean diag density {} vs p_in {p_in}",
            profile.mean_diag_density()
        );
    }

    #[test]
    fn permutation_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("perm.json");
        let p = Permutation::shuffled(9, 3);
        p.save_json(&path).unwrap();
        assert_eq!(Permutation::load_json(&path).unwrap(), p);

        std::fs::write(&path, "[0, 0, 2]").unwrap();
        assert!(Permutation::load_json(&path).is_err());
        std::fs::write(&path, "[0, 5, 2]").unwrap();
        assert!(Permutation::load_json(&path).is_err());
    }

    #[test]
    fn reorder_rejects_bad_arguments() {
        let a = gen_sbm(10, 2, 0.5, 0.0, 1).unwrap();
        assert!(reorder_graph(&a, 0, 1).is_err());
        let rect = CsrMatrix::new_empty(3, 4).unwrap();
        assert!(reorder_graph(&rect, 2, 1).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn permutation_preserves_structure(n in 2usize..40, density in 0.0f64..0.5,
                                           seed in 0u64..500) {
            let raw = CsrMatrix::random(n, n, density, seed).unwrap();
            let mut triplets = raw.triplets();
            let mirrored: Vec<_> = triplets.iter().map(|&(i, j, v)| (j, i, v)).collect();
            triplets.extend(mirrored);
            let a = CsrMatrix::from_coo(n, n, &triplets).unwrap();

            let p = Permutation::shuffled(n, seed ^ 0x77);
            let b = apply_permutation(&a, &p).unwrap();

            prop_assert_eq!(a.nnz(), b.nnz());
            prop_assert!(b.pattern_is_symmetric());

            let mut deg_a: Vec<usize> = (0..n).map(|r| a.row_nnz(r)).collect();
            let mut deg_b: Vec<usize> = (0..n).map(|r| b.row_nnz(r)).collect();
            deg_a.sort_unstable();
            deg_b.sort_unstable();
            prop_assert_eq!(deg_a, deg_b);
        }

        #[test]
        fn reordering_is_only_a_relabeling(n in 4usize..32, density in 0.05f64..0.5,
                                           seed in 0u64..500) {
            let a = CsrMatrix::random(n, n, density, seed).unwrap();
            let p = reorder_graph(&a, 2, seed).unwrap();
            let b = apply_permutation(&a, &p).unwrap();
            let ad = a.to_dense().unwrap();
            let bd = b.to_dense().unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(bd.get(p.forward()[i], p.forward()[j]), ad.get(i, j));
                }
            }
        }

        #[test]
        fn strong_communities_reorder_denser_than_shuffled(seed in 0u64..50) {
            let (n, k) = (128usize, 4usize);
            let a = gen_sbm(n, k, 0.5, 0.02, seed).unwrap();
            let shuffled = apply_permutation(&a, &Permutation::shuffled(n, seed ^ 0x3141)).unwrap();
            let before = block_density_profile(&shuffled, n / k).unwrap().mean_diag_density();
            let p = reorder_graph(&shuffled, k, seed).unwrap();
            let after = block_density_profile(&apply_permutation(&shuffled, &p).unwrap(), n / k)
                .unwrap()
                .mean_diag_density();
            prop_assert!(after > before, "after {} <= before {}", after, before);
        }
    }
}
