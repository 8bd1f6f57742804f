//! Latency estimators for the four resources of the modeled accelerator:
//! dense tensor PEs, sparse tensor PEs, the fabric SpMM unit, and the data
//! movement channels. Defaults embed measured calibration figures; a JSON
//! file can override any of them.

use crate::error::{Error, Result};
use crate::matcore::Density;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Effective GFLOPS of one sparse tensor PE by operand density, measured on
/// a 32x32 by 32x32 product.
const SPARSE_EFF_FLOPS: [(f64, f64); 6] = [
    (0.10, 1.6e9),
    (0.20, 2.5e9),
    (0.30, 3.1e9),
    (0.40, 3.4e9),
    (0.50, 3.5e9),
    (0.60, 3.7e9),
];

/// Measured fabric SpMM times for a 64x64 by 64x32 product, by density.
const PL_SPMM_POINTS: [(f64, f64); 5] = [
    (0.001, 0.18e-6),
    (0.005, 0.88e-6),
    (0.010, 1.75e-6),
    (0.050, 8.41e-6),
    (0.100, 16.82e-6),
];

/// Measured tensor-array SpMM times for the same 64x64 by 64x32 product.
/// Kept as a reference curve for validation and the engine-crossover check;
/// these include per-kernel overheads that the effective-FLOPS model (taken
/// on a different shape) does not capture, so they are not folded into
/// [`CostModel::sparse_stpe_time`].
const AIE_SPMM_REFERENCE: [(f64, f64); 5] = [
    (0.001, 1.10e-6),
    (0.005, 2.07e-6),
    (0.010, 3.84e-6),
    (0.050, 7.97e-6),
    (0.100, 10.44e-6),
];

/// Data movement channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// External memory, four channels aggregated.
    Ddr,
    /// Fabric to tensor-array streams.
    PlAie,
    /// Tensor array to NoC.
    AieNoc,
}

fn default_aie_freq() -> f64 {
    1.0e9
}
fn default_pl_freq() -> f64 {
    273.0e6
}
fn default_noc_freq() -> f64 {
    800.0e6
}
fn default_dense_flops() -> f64 {
    7.1e9
}
fn default_sparse_eff() -> Vec<(f64, f64)> {
    SPARSE_EFF_FLOPS.to_vec()
}
fn default_pl_points() -> Vec<(f64, f64)> {
    PL_SPMM_POINTS.to_vec()
}
fn default_aie_reference() -> Vec<(f64, f64)> {
    AIE_SPMM_REFERENCE.to_vec()
}
fn default_ddr_bw_per_channel() -> f64 {
    25.0e9
}
fn default_ddr_channels() -> u32 {
    4
}
fn default_ddr_efficiency() -> f64 {
    0.75
}
fn default_pl_aie_bw() -> f64 {
    1.3e12
}
fn default_aie_noc_bw() -> f64 {
    12.0e9
}

/// Calibration tables and frequencies for every latency estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub aie_freq: f64,
    pub pl_freq: f64,
    pub noc_freq: f64,
    /// Dense GEMM throughput of one tensor PE, flops per second.
    pub dense_flops: f64,
    /// (density, effective flops/s) knots for the sparse tensor PE.
    pub sparse_eff_flops: Vec<(f64, f64)>,
    /// (density, seconds) knots for the fabric unit at the 64x64 by 64x32 shape.
    pub pl_spmm_points: Vec<(f64, f64)>,
    /// (density, seconds) measured tensor-array reference at the same shape.
    pub aie_spmm_reference: Vec<(f64, f64)>,
    pub ddr_bw_per_channel: f64,
    pub ddr_channels: u32,
    /// Fraction of peak external bandwidth actually sustained.
    pub ddr_efficiency: f64,
    pub pl_aie_bw: f64,
    pub aie_noc_bw: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            aie_freq: default_aie_freq(),
            pl_freq: default_pl_freq(),
            noc_freq: default_noc_freq(),
            dense_flops: default_dense_flops(),
            sparse_eff_flops: default_sparse_eff(),
            pl_spmm_points: default_pl_points(),
            aie_spmm_reference: default_aie_reference(),
            ddr_bw_per_channel: default_ddr_bw_per_channel(),
            ddr_channels: default_ddr_channels(),
            ddr_efficiency: default_ddr_efficiency(),
            pl_aie_bw: default_pl_aie_bw(),
            aie_noc_bw: default_aie_noc_bw(),
        }
    }
}

/// One row of the calibration-reproduction report.
#[derive(Clone, Debug, Serialize)]
pub struct CalibrationRow {
    pub name: String,
    pub expected: f64,
    pub modeled: f64,
    pub rel_err: f64,
    /// Gated rows fail validation beyond the tolerance; ungated rows are
    /// informational only.
    pub gated: bool,
    pub pass: bool,
}

impl CostModel {
    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: Self = serde_json::from_str(&text)?;
        model.validate_tables()?;
        Ok(model)
    }

    pub fn validate_tables(&self) -> Result<()> {
        for (name, table) in [
            ("sparse_eff_flops", &self.sparse_eff_flops),
            ("pl_spmm_points", &self.pl_spmm_points),
            ("aie_spmm_reference", &self.aie_spmm_reference),
        ] {
            if table.is_empty() {
                return Err(Error::Validation(format!("{name} table is empty")));
            }
            for w in table.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::Validation(format!("{name} not sorted by density")));
                }
            }
            if table.iter().any(|&(d, v)| d <= 0.0 || v <= 0.0) {
                return Err(Error::Validation(format!("{name} has non-positive entries")));
            }
        }
        for (name, v) in [
            ("aie_freq", self.aie_freq),
            ("pl_freq", self.pl_freq),
            ("noc_freq", self.noc_freq),
            ("dense_flops", self.dense_flops),
            ("ddr_bw_per_channel", self.ddr_bw_per_channel),
            ("ddr_efficiency", self.ddr_efficiency),
            ("pl_aie_bw", self.pl_aie_bw),
            ("aie_noc_bw", self.aie_noc_bw),
        ] {
            if v <= 0.0 || v.is_nan() {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Dense tensor-PE time for an m*k by k*n product: 2mkn flops at the
    /// calibrated dense rate.
    pub fn dense_tpe_time(&self, m: usize, k: usize, n: usize) -> f64 {
        2.0 * m as f64 * k as f64 * n as f64 / self.dense_flops
    }

    /// Effective flops/s of a sparse tensor PE at the given density:
    /// piecewise-linear between the table knots, clamped to the end values
    /// outside them. Above the last knot the sparse kernel keeps degrading
    /// relative to dense; the mapping policy switches to dense engines well
    /// before that point.
    pub fn sparse_eff(&self, density: f64) -> f64 {
        let table = &self.sparse_eff_flops;
        if density <= table[0].0 {
            return table[0].1;
        }
        if density >= table[table.len() - 1].0 {
            return table[table.len() - 1].1;
        }
        for w in table.windows(2) {
            let ((d0, f0), (d1, f1)) = (w[0], w[1]);
            if density == d0 {
                return f0;
            }
            if density < d1 {
                let t = (density - d0) / (d1 - d0);
                return f0 + t * (f1 - f0);
            }
        }
        table[table.len() - 1].1
    }

    /// Sparse tensor-PE time for an m*k by k*n product at the given operand
    /// density: work counts nonzeros only, at the density-dependent rate.
    pub fn sparse_stpe_time(&self, m: usize, k: usize, n: usize, density: Density) -> f64 {
        let d = density.value();
        if d == 0.0 {
            return 0.0;
        }
        2.0 * d * m as f64 * k as f64 * n as f64 / self.sparse_eff(d)
    }

    /// Sparse tensor-PE time expressed over an explicit nonzero count, with
    /// the rate still taken at the padded operand density.
    pub fn sparse_time_for_nnz(&self, nnz: usize, out_cols: usize, density: Density) -> f64 {
        if nnz == 0 {
            return 0.0;
        }
        2.0 * nnz as f64 * out_cols as f64 / self.sparse_eff(density.value())
    }

    /// Linear fit (a, b) with time = a * nnz + b for the fabric unit,
    /// obtained by least squares on relative residuals through the
    /// calibration points. Relative weighting keeps the sub-microsecond
    /// points inside tolerance, and its intercept is the unit's startup
    /// floor (about 0.01 us).
    pub fn pl_fit(&self) -> (f64, f64) {
        let mut sw = 0.0;
        let mut swx = 0.0;
        let mut swx2 = 0.0;
        let mut swy = 0.0;
        let mut swxy = 0.0;
        for &(density, t) in &self.pl_spmm_points {
            let x = density * 64.0 * 64.0;
            let w = 1.0 / (t * t);
            sw += w;
            swx += w * x;
            swx2 += w * x * x;
            swy += w * t;
            swxy += w * x * t;
        }
        let det = swx2 * sw - swx * swx;
        let a = (swxy * sw - swx * swy) / det;
        let b = (swx2 * swy - swx * swxy) / det;
        (a, b)
    }

    /// Fabric SpMM time for a given nonzero count, scaled linearly in the
    /// output width from the calibrated 32-column shape.
    pub fn pl_spmm_time(&self, nnz: usize, out_cols: usize) -> f64 {
        let (a, b) = self.pl_fit();
        (a * nnz as f64 + b) * (out_cols as f64 / 32.0)
    }

    /// Measured tensor-array SpMM reference for the 64x64 by 64x32 shape,
    /// interpolated between the table densities and clamped outside them.
    pub fn aie_spmm_reference_time(&self, density: f64) -> f64 {
        let table = &self.aie_spmm_reference;
        if density <= table[0].0 {
            return table[0].1;
        }
        if density >= table[table.len() - 1].0 {
            return table[table.len() - 1].1;
        }
        for w in table.windows(2) {
            let ((d0, t0), (d1, t1)) = (w[0], w[1]);
            if density == d0 {
                return t0;
            }
            if density < d1 {
                let t = (density - d0) / (d1 - d0);
                return t0 + t * (t1 - t0);
            }
        }
        table[table.len() - 1].1
    }

    /// Aggregate sustained external-memory bandwidth.
    pub fn ddr_bw(&self) -> f64 {
        self.ddr_bw_per_channel * f64::from(self.ddr_channels) * self.ddr_efficiency
    }

    /// Bulk transfer time over a channel.
    pub fn transfer_time(&self, bytes: usize, channel: Channel) -> f64 {
        let bw = match channel {
            Channel::Ddr => self.ddr_bw(),
            Channel::PlAie => self.pl_aie_bw,
            Channel::AieNoc => self.aie_noc_bw,
        };
        bytes as f64 / bw
    }

    /// Smallest density in [lo, hi] where the fabric unit stops being faster
    /// than the measured tensor-array reference, found by a fine scan.
    pub fn pl_aie_crossover_density(&self) -> f64 {
        let lo = self.pl_spmm_points[0].0;
        let hi = self.pl_spmm_points[self.pl_spmm_points.len() - 1].0;
        let steps = 20_000;
        for i in 0..=steps {
            let d = lo + (hi - lo) * i as f64 / steps as f64;
            let nnz = (d * 64.0 * 64.0).round() as usize;
            if self.pl_spmm_time(nnz, 32) >= self.aie_spmm_reference_time(d) {
                return d;
            }
        }
        hi
    }

    /// Reproduce every calibration figure and report the deviations.
    /// Gated rows: the five fabric points (5%), the effective-FLOPS knots
    /// (exact), the density-0.1 speedup against the measured figure (15%),
    /// the near-unity speedup at 50% density, and the engine crossover
    /// window. The tensor-array reference rows are informational.
    pub fn calibration_report(&self) -> Vec<CalibrationRow> {
        let mut rows = Vec::new();

        for &(density, expected) in &self.pl_spmm_points {
            let nnz = (density * 64.0 * 64.0).round() as usize;
            let modeled = self.pl_spmm_time(nnz, 32);
            let rel = (modeled - expected).abs() / expected;
            rows.push(CalibrationRow {
                name: format!("pl_spmm at density {:.2}% (64x64 by 64x32)", density * 100.0),
                expected,
                modeled,
                rel_err: rel,
                gated: true,
                pass: rel <= 0.05,
            });
        }

        for &(density, expected) in &self.sparse_eff_flops {
            let modeled = self.sparse_eff(density);
            let rel = (modeled - expected).abs() / expected;
            rows.push(CalibrationRow {
                name: format!("sparse effective flops at density {:.0}%", density * 100.0),
                expected,
                modeled,
                rel_err: rel,
                gated: true,
                pass: modeled == expected,
            });
        }

        // Grouped-versus-dense speedup at 10% density, 32x32x32: the FLOPS
        // tables give 2.25x; the measured figure on that shape is 2.1x.
        let d10 = Density::new(0.10).unwrap();
        let speedup10 = self.dense_tpe_time(32, 32, 32) / self.sparse_stpe_time(32, 32, 32, d10);
        let rel10 = (speedup10 - 2.1).abs() / 2.1;
        rows.push(CalibrationRow {
            name: "sparse/dense speedup at 10% density (32x32x32), vs measured 2.1x".into(),
            expected: 2.1,
            modeled: speedup10,
            rel_err: rel10,
            gated: true,
            pass: rel10 <= 0.15,
        });

        // At 50% density the advantage is gone.
        let d50 = Density::new(0.50).unwrap();
        let speedup50 = self.dense_tpe_time(32, 32, 32) / self.sparse_stpe_time(32, 32, 32, d50);
        rows.push(CalibrationRow {
            name: "sparse/dense speedup at 50% density (32x32x32)".into(),
            expected: 1.0,
            modeled: speedup50,
            rel_err: (speedup50 - 1.0).abs(),
            gated: true,
            pass: (0.95..=1.05).contains(&speedup50),
        });

        // Fabric vs tensor array on the 64-row shape: fabric wins strictly at
        // 1% density and loses by 5%, so the crossover sits between them.
        let pl_1pct = self.pl_spmm_time(41, 32);
        let aie_1pct = self.aie_spmm_reference_time(0.01);
        rows.push(CalibrationRow {
            name: "fabric faster than tensor array at 1% density".into(),
            expected: aie_1pct,
            modeled: pl_1pct,
            rel_err: (pl_1pct - aie_1pct).abs() / aie_1pct,
            gated: true,
            pass: pl_1pct < aie_1pct,
        });
        let crossover = self.pl_aie_crossover_density();
        rows.push(CalibrationRow {
            name: "fabric/tensor-array crossover density in [1%, 5%]".into(),
            expected: 0.01,
            modeled: crossover,
            rel_err: 0.0,
            gated: true,
            pass: (0.01..=0.05).contains(&crossover),
        });

        // Informational: the effective-FLOPS model against the measured
        // tensor-array curve at the 64-row shape. The sub-1% rows include
        // overheads the model deliberately does not carry.
        for &(density, expected) in &self.aie_spmm_reference {
            let modeled = self.sparse_stpe_time(64, 64, 32, Density::new(density).unwrap());
            rows.push(CalibrationRow {
                name: format!(
                    "tensor-array SpMM at density {:.2}% (measured vs flops model, informational)",
                    density * 100.0
                ),
                expected,
                modeled,
                rel_err: (modeled - expected).abs() / expected,
                gated: false,
                pass: true,
            });
        }

        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_time_examples() {
        let cm = CostModel::default();
        let t = cm.dense_tpe_time(32, 32, 32);
        assert!((t - 65536.0 / 7.1e9).abs() < 1e-15);
        assert!((t - 9.23e-6).abs() < 0.01e-6);
        assert_eq!(cm.dense_tpe_time(1, 1, 1), 2.0 / 7.1e9);
        // Linearity in each dimension.
        assert!((cm.dense_tpe_time(32, 32, 64) - 2.0 * t).abs() < 1e-15);
    }

    #[test]
    fn sparse_eff_is_exact_at_knots() {
        let cm = CostModel::default();
        for &(d, f) in &SPARSE_EFF_FLOPS {
            assert_eq!(cm.sparse_eff(d), f);
        }
        // Clamped outside the table.
        assert_eq!(cm.sparse_eff(0.01), 1.6e9);
        assert_eq!(cm.sparse_eff(0.9), 3.7e9);
    }

    #[test]
    fn sparse_time_examples() {
        let cm = CostModel::default();
        let t10 = cm.sparse_stpe_time(32, 32, 32, Density::new(0.10).unwrap());
        assert!((t10 - 2.0 * 0.1 * 32768.0 / 1.6e9).abs() < 1e-15);
        assert!((t10 - 4.10e-6).abs() < 0.01e-6);

        let speedup10 = cm.dense_tpe_time(32, 32, 32) / t10;
        assert!((speedup10 - 2.25).abs() < 0.01);
        assert!((speedup10 - 2.1).abs() / 2.1 < 0.15);

        let t50 = cm.sparse_stpe_time(32, 32, 32, Density::new(0.50).unwrap());
        let speedup50 = cm.dense_tpe_time(32, 32, 32) / t50;
        assert!((0.95..=1.05).contains(&speedup50), "speedup at 50%: {speedup50}");

        assert_eq!(cm.sparse_stpe_time(32, 32, 32, Density::new(0.0).unwrap()), 0.0);
    }

    #[test]
    fn sparse_time_is_monotone_in_density() {
        let cm = CostModel::default();
        let mut prev = 0.0;
        for i in 1..=60 {
            let d = i as f64 / 100.0;
            let t = cm.sparse_stpe_time(32, 32, 32, Density::new(d).unwrap());
            assert!(t > prev, "time not increasing at density {d}");
            prev = t;
        }
    }

    #[test]
    fn pl_fit_reproduces_all_points_within_five_percent() {
        let cm = CostModel::default();
        for &(density, expected) in &PL_SPMM_POINTS {
            let nnz = (density * 4096.0).round() as usize;
            let modeled = cm.pl_spmm_time(nnz, 32);
            let rel = (modeled - expected).abs() / expected;
            assert!(rel <= 0.05, "density {density}: modeled {modeled}, expected {expected}");
        }
    }

    #[test]
    fn pl_intercept_is_a_small_startup_floor() {
        let cm = CostModel::default();
        let floor = cm.pl_spmm_time(0, 32);
        assert!(floor > 0.005e-6 && floor < 0.02e-6, "floor {floor}");
        // Output width scales linearly.
        assert!((cm.pl_spmm_time(41, 64) - 2.0 * cm.pl_spmm_time(41, 32)).abs() < 1e-15);
    }

    #[test]
    fn transfer_examples() {
        let cm = CostModel { ddr_efficiency: 1.0, ..CostModel::default() };
        assert_eq!(cm.transfer_time(0, Channel::Ddr), 0.0);
        assert!((cm.transfer_time(100_000_000_000, Channel::Ddr) - 1.0).abs() < 1e-12);
        assert!((cm.transfer_time(12_000_000_000, Channel::AieNoc) - 1.0).abs() < 1e-12);
        assert!((CostModel::default().ddr_bw() - 75.0e9).abs() < 1e-3);
    }

    #[test]
    fn fabric_beats_tensor_array_only_below_the_crossover() {
        let cm = CostModel::default();
        assert!(cm.pl_spmm_time(41, 32) < cm.aie_spmm_reference_time(0.01));
        assert!(cm.pl_spmm_time(205, 32) > cm.aie_spmm_reference_time(0.05));
        let crossover = cm.pl_aie_crossover_density();
        assert!(
            (0.01..=0.05).contains(&crossover),
            "crossover at {crossover}"
        );
    }

    #[test]
    fn calibration_report_is_all_green_by_default() {
        let rows = CostModel::default().calibration_report();
        assert!(rows.iter().filter(|r| r.gated).all(|r| r.pass));
        // And the informational tensor-array rows exist.
        assert!(rows.iter().any(|r| !r.gated));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("costs.json");
        let cm = CostModel { ddr_efficiency: 0.69, ..CostModel::default() };
        std::fs::write(&path, serde_json::to_string_pretty(&cm).unwrap()).unwrap();
        let back = CostModel::load_json(&path).unwrap();
        assert_eq!(back.ddr_efficiency, 0.69);
        assert_eq!(back.dense_flops, 7.1e9);

        std::fs::write(&path, r#"{"sparse_eff_flops": []}"#).unwrap();
        assert!(CostModel::load_json(&path).is_err());
    }
}
