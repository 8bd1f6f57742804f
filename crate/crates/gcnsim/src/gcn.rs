//! End-to-end two-layer GCN inference over the mapping pipeline, in
//! combination-first order: B = X*W first (dense engines), then the
//! aggregation A*B through the planned dense/sparse/fabric split.
//!
//! Two paths share the numerics: the functional path checks the values, the
//! timed path additionally builds per-layer task graphs and simulates them.
//! Timing never changes the numbers.

use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::matcore::{dense_gemm, CsrMatrix, DenseMatrix};
use crate::pegen::{execute_plan_functional, generate_pe_plan, PePlan, PlanParams, PlanSummary};
use crate::pipesim::{
    build_task_graph, simulate, ArrayGeometry, LayerDims, SchedulePolicy, ScheduleTrace,
};
use crate::reorder::{apply_permutation, permute_rows, reorder_graph};
use serde::{Deserialize, Serialize};

/// Activation applied to the final layer. Hidden layers always use ReLU.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    None,
    Relu,
    Softmax,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Activation::None),
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::Parameter(format!("unknown activation {other}"))),
        }
    }
}

/// Two-layer model weights. Shapes chain F_in -> hidden -> classes.
#[derive(Clone, Debug)]
pub struct GcnModel {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    pub final_activation: Activation,
}

impl GcnModel {
    pub fn new(w1: DenseMatrix, w2: DenseMatrix, final_activation: Activation) -> Result<Self> {
        if w1.cols() != w2.rows() {
            return Err(Error::Shape(format!(
                "weight shapes do not chain: {}x{} then {}x{}",
                w1.rows(),
                w1.cols(),
                w2.rows(),
                w2.cols()
            )));
        }
        Ok(Self { w1, w2, final_activation })
    }

    /// Seeded uniform(-0.05, 0.05) weights for fixtures; inference only.
    pub fn random(f_in: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        Self::new(
            DenseMatrix::random_uniform(f_in, hidden, -0.05, 0.05, seed)?,
            DenseMatrix::random_uniform(hidden, classes, -0.05, 0.05, seed.wrapping_add(1))?,
            Activation::None,
        )
    }

    pub fn f_in(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn classes(&self) -> usize {
        self.w2.cols()
    }
}

/// Element-wise max(0, x).
pub fn relu(m: &DenseMatrix) -> DenseMatrix {
    let values = m.values().iter().map(|&v| v.max(0.0)).collect();
    DenseMatrix::from_vec(m.rows(), m.cols(), values).expect("shape preserved")
}

/// Row-wise softmax with the usual max-shift for stability.
pub fn softmax_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.rows(), m.cols()).expect("shape preserved");
    for i in 0..m.rows() {
        let row = m.row(i);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for &v in row {
            sum += (v - max).exp();
        }
        let orow = out.row_mut(i);
        for (j, &v) in row.iter().enumerate() {
            orow[j] = (v - max).exp() / sum;
        }
    }
    out
}

fn apply_final(m: DenseMatrix, act: Activation) -> DenseMatrix {
    match act {
        Activation::None => m,
        Activation::Relu => relu(&m),
        Activation::Softmax => softmax_rows(&m),
    }
}

/// Flop counts of the two evaluation orders for one layer.
fn layer_flops(n: usize, nnz: usize, f_in: usize, f_out: usize) -> (f64, f64) {
    let dense = 2.0 * n as f64 * f_in as f64 * f_out as f64;
    let combination = dense + 2.0 * nnz as f64 * f_out as f64;
    let aggregation = 2.0 * nnz as f64 * f_in as f64 + dense;
    (combination, aggregation)
}

/// Summary statistics attached to every inference run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunStats {
    pub nodes: usize,
    pub nnz: usize,
    pub input_density: f64,
    pub reordered: bool,
    pub parts: usize,
    pub plan: PlanSummary,
    pub flops_combination_first: f64,
    pub flops_aggregation_first: f64,
    pub layer_makespans_s: Vec<f64>,
    pub layer_ddr_s: Vec<f64>,
    pub ddr_streaming_charged: bool,
    pub total_makespan_s: f64,
}

/// Inference output: logits (unless skipped), per-layer traces when timed,
/// and run statistics. The reordering wall time is kept out of [`RunStats`]
/// so reports stay reproducible byte for byte; it is surfaced here for
/// separate display.
#[derive(Clone, Debug)]
pub struct InferenceResult {
    pub logits: Option<DenseMatrix>,
    pub traces: Vec<ScheduleTrace>,
    pub stats: RunStats,
    pub reorder_wall_s: Option<f64>,
}

fn check_shapes(a_norm: &CsrMatrix, x: &DenseMatrix, model: &GcnModel) -> Result<()> {
    if a_norm.rows() != a_norm.cols() {
        return Err(Error::Shape(format!(
            "adjacency must be square, got {}x{}",
            a_norm.rows(),
            a_norm.cols()
        )));
    }
    if x.rows() != a_norm.rows() {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows for {} vertices",
            x.rows(),
            a_norm.rows()
        )));
    }
    if x.cols() != model.f_in() {
        return Err(Error::Shape(format!(
            "feature width {} does not match W1 input {}",
            x.cols(),
            model.f_in()
        )));
    }
    Ok(())
}

fn forward(plan: &PePlan, x: &DenseMatrix, model: &GcnModel) -> Result<DenseMatrix> {
    let b1 = dense_gemm(x, &model.w1)?;
    let h1 = relu(&execute_plan_functional(plan, &b1)?);
    let b2 = dense_gemm(&h1, &model.w2)?;
    let out = execute_plan_functional(plan, &b2)?;
    Ok(apply_final(out, model.final_activation))
}

fn base_stats(a_norm: &CsrMatrix, plan: &PePlan, model: &GcnModel, f_in: usize) -> RunStats {
    let n = a_norm.rows();
    let nnz = a_norm.nnz();
    let (c1, g1) = layer_flops(n, nnz, f_in, model.hidden());
    let (c2, g2) = layer_flops(n, nnz, model.hidden(), model.classes());
    RunStats {
        nodes: n,
        nnz,
        input_density: a_norm.density().value(),
        reordered: false,
        parts: 1,
        plan: plan.report().summary,
        flops_combination_first: c1 + c2,
        flops_aggregation_first: g1 + g2,
        layer_makespans_s: Vec::new(),
        layer_ddr_s: Vec::new(),
        ddr_streaming_charged: false,
        total_makespan_s: 0.0,
    }
}

/// Numerics-only inference: plan the split once and run both layers through
/// it. Returns raw logits unless the model requests a final activation.
pub fn infer_functional(
    a_norm: &CsrMatrix,
    x: &DenseMatrix,
    model: &GcnModel,
    params: &PlanParams,
) -> Result<InferenceResult> {
    check_shapes(a_norm, x, model)?;
    let plan = generate_pe_plan(a_norm, params)?;
    let logits = forward(&plan, x, model)?;
    let stats = base_stats(a_norm, &plan, model, x.cols());
    Ok(InferenceResult { logits: Some(logits), traces: Vec::new(), stats, reorder_wall_s: None })
}

/// Options for the timed path.
#[derive(Clone, Copy, Debug)]
pub struct TimedOptions {
    /// Apply the locality reordering before planning.
    pub reorder: bool,
    pub parts: usize,
    pub seed: u64,
    pub policy: SchedulePolicy,
    /// Skip the functional numerics (timing-only mode for large graphs).
    pub skip_functional: bool,
    /// Charge bulk external-memory streaming per layer as
    /// max(compute, transfer). Off by default: the calibration source
    /// reports engine execution time with graph data staged in advance.
    pub ddr_streaming: bool,
}

impl Default for TimedOptions {
    fn default() -> Self {
        Self {
            reorder: true,
            parts: 8,
            seed: 7,
            policy: SchedulePolicy::Pipelined,
            skip_functional: false,
            ddr_streaming: false,
        }
    }
}

/// Timed inference: optionally reorder, plan once (the adjacency is constant
/// across both layers of a run), simulate layer 1 (F_in -> hidden) and
/// layer 2 (hidden -> classes), and sum the makespans. The functional result
/// is identical to [`infer_functional`]; reordering is undone on the output
/// rows so logits stay in input vertex order.
pub fn infer_timed(
    a_norm: &CsrMatrix,
    x: &DenseMatrix,
    model: &GcnModel,
    params: &PlanParams,
    opts: &TimedOptions,
    geom: &ArrayGeometry,
    cost: &CostModel,
) -> Result<InferenceResult> {
    check_shapes(a_norm, x, model)?;

    let mut reorder_wall = None;
    let (a_used, perm) = if opts.reorder {
        let t0 = std::time::Instant::now();
        let p = reorder_graph(a_norm, opts.parts, opts.seed)?;
        let a2 = apply_permutation(a_norm, &p)?;
        reorder_wall = Some(t0.elapsed().as_secs_f64());
        (a2, Some(p))
    } else {
        (a_norm.clone(), None)
    };

    let plan = generate_pe_plan(&a_used, params)?;

    let logits = if opts.skip_functional {
        None
    } else {
        let x_used = match &perm {
            Some(p) => permute_rows(x, p)?,
            None => x.clone(),
        };
        let out = forward(&plan, &x_used, model)?;
        Some(match &perm {
            Some(p) => permute_rows(&out, &p.inverted())?,
            None => out,
        })
    };

    let n = a_used.rows();
    let layers = [
        LayerDims { n, f_in: x.cols(), f_out: model.hidden(), activation: true },
        LayerDims {
            n,
            f_in: model.hidden(),
            f_out: model.classes(),
            activation: model.final_activation == Activation::Relu,
        },
    ];

    let mut traces = Vec::with_capacity(2);
    let mut layer_makespans = Vec::with_capacity(2);
    let mut layer_ddr = Vec::with_capacity(2);
    // CSR bytes: u32 column index and f32 value per entry, u32 row offsets.
    let a_bytes = a_used.nnz() * 8 + (n + 1) * 4;
    for (li, dims) in layers.iter().enumerate() {
        let tg = build_task_graph(&plan, *dims, geom, cost)?;
        let trace = simulate(&tg, geom, opts.policy)?;
        let operand_bytes = n * dims.f_in * 4 + if li == 0 { a_bytes } else { 0 };
        let ddr = cost.transfer_time(operand_bytes, crate::costmodel::Channel::Ddr);
        layer_ddr.push(ddr);
        layer_makespans.push(if opts.ddr_streaming { trace.makespan.max(ddr) } else { trace.makespan });
        traces.push(trace);
    }

    let mut stats = base_stats(&a_used, &plan, model, x.cols());
    stats.reordered = opts.reorder;
    stats.parts = opts.parts;
    stats.total_makespan_s = layer_makespans.iter().sum();
    stats.layer_makespans_s = layer_makespans;
    stats.layer_ddr_s = layer_ddr;
    stats.ddr_streaming_charged = opts.ddr_streaming;

    Ok(InferenceResult { logits, traces, stats, reorder_wall_s: reorder_wall })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::normalize_adjacency;
    use crate::reorder::gen_sbm;

    fn fixture() -> (CsrMatrix, DenseMatrix, GcnModel) {
        let a = gen_sbm(512, 8, 0.3, 0.01, 7).unwrap();
        let norm = normalize_adjacency(&a).unwrap();
        let x = DenseMatrix::random_uniform(512, 96, -1.0, 1.0, 42).unwrap();
        let model = GcnModel::random(96, 128, 16, 42).unwrap();
        (norm, x, model)
    }

    /// All-dense oracle for the two-layer forward pass.
    fn dense_oracle(a_norm: &CsrMatrix, x: &DenseMatrix, model: &GcnModel) -> DenseMatrix {
        let ad = a_norm.to_dense().unwrap();
        let b1 = dense_gemm(x, &model.w1).unwrap();
        let h1 = relu(&dense_gemm(&ad, &b1).unwrap());
        let b2 = dense_gemm(&h1, &model.w2).unwrap();
        apply_final(dense_gemm(&ad, &b2).unwrap(), model.final_activation)
    }

    #[test]
    fn isolated_self_loops_reduce_to_an_mlp() {
        // Normalized adjacency of isolated vertices is the identity, so the
        // aggregation is a pass-through.
        let n = 64;
        let a = CsrMatrix::new_empty(n, n).unwrap();
        let norm = normalize_adjacency(&a).unwrap();
        let x = DenseMatrix::random_uniform(n, 24, -1.0, 1.0, 1).unwrap();
        let model = GcnModel::random(24, 16, 4, 2).unwrap();
        let got = infer_functional(&norm, &x, &model, &PlanParams::default())
            .unwrap()
            .logits
            .unwrap();

        let h1 = relu(&dense_gemm(&x, &model.w1).unwrap());
        let want = dense_gemm(&h1, &model.w2).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-5);
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let (norm, x, _) = fixture();
        let model = GcnModel::new(
            DenseMatrix::zeros(96, 128).unwrap(),
            DenseMatrix::zeros(128, 16).unwrap(),
            Activation::None,
        )
        .unwrap();
        let logits =
            infer_functional(&norm, &x, &model, &PlanParams::default()).unwrap().logits.unwrap();
        assert!(logits.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn functional_path_matches_the_dense_chain_oracle() {
        let (norm, x, model) = fixture();
        let got =
            infer_functional(&norm, &x, &model, &PlanParams::default()).unwrap().logits.unwrap();
        let want = dense_oracle(&norm, &x, &model);
        assert!(got.max_abs_diff(&want) < 1e-3, "diff {}", got.max_abs_diff(&want));
    }

    #[test]
    fn timed_logits_are_identical_without_reordering() {
        let (norm, x, model) = fixture();
        let params = PlanParams::default();
        let functional = infer_functional(&norm, &x, &model, &params).unwrap().logits.unwrap();
        let opts = TimedOptions { reorder: false, ..TimedOptions::default() };
        let timed = infer_timed(
            &norm,
            &x,
            &model,
            &params,
            &opts,
            &ArrayGeometry::default(),
            &CostModel::default(),
        )
        .unwrap();
        assert_eq!(timed.logits.unwrap().values(), functional.values());
        assert!(timed.stats.total_makespan_s > 0.0);
        assert_eq!(timed.traces.len(), 2);
    }

    #[test]
    fn timed_logits_with_reordering_match_within_tolerance() {
        let (norm, x, model) = fixture();
        let params = PlanParams::default();
        let functional = infer_functional(&norm, &x, &model, &params).unwrap().logits.unwrap();
        let timed = infer_timed(
            &norm,
            &x,
            &model,
            &params,
            &TimedOptions::default(),
            &ArrayGeometry::default(),
            &CostModel::default(),
        )
        .unwrap();
        let diff = timed.logits.unwrap().max_abs_diff(&functional);
        assert!(diff < 1e-3, "diff {diff}");
    }

    #[test]
    fn timed_runs_are_deterministic() {
        let (norm, x, model) = fixture();
        let run = || {
            infer_timed(
                &norm,
                &x,
                &model,
                &PlanParams::default(),
                &TimedOptions::default(),
                &ArrayGeometry::default(),
                &CostModel::default(),
            )
            .unwrap()
            .stats
            .total_makespan_s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn relu_is_idempotent_and_softmax_rows_sum_to_one() {
        let m = DenseMatrix::random_uniform(8, 8, -2.0, 2.0, 3).unwrap();
        let once = relu(&m);
        assert_eq!(relu(&once), once);

        let sm = softmax_rows(&m);
        for i in 0..8 {
            let sum: f32 = sm.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn combination_first_saves_flops_when_features_exceed_hidden() {
        // Per layer: the orders differ by 2 * nnz * (f_out - f_in).
        let (nnz, n) = (10_000usize, 2_000usize);
        let (comb_wide, agg_wide) = layer_flops(n, nnz, 600, 128);
        assert!(comb_wide <= agg_wide);
        let (comb_narrow, agg_narrow) = layer_flops(n, nnz, 96, 128);
        assert!(comb_narrow >= agg_narrow);

        // Both layers of a wide-feature model favor combination-first.
        let (norm, _, _) = fixture();
        let x_wide = DenseMatrix::random_uniform(512, 600, -1.0, 1.0, 9).unwrap();
        let model_narrow = GcnModel::random(600, 128, 16, 10).unwrap();
        let r = infer_functional(&norm, &x_wide, &model_narrow, &PlanParams::default()).unwrap();
        assert!(r.stats.flops_combination_first <= r.stats.flops_aggregation_first);
    }

    #[test]
    fn skip_functional_omits_logits_but_times_the_run() {
        let (norm, x, model) = fixture();
        let opts = TimedOptions { skip_functional: true, ..TimedOptions::default() };
        let r = infer_timed(
            &norm,
            &x,
            &model,
            &PlanParams::default(),
            &opts,
            &ArrayGeometry::default(),
            &CostModel::default(),
        )
        .unwrap();
        assert!(r.logits.is_none());
        assert!(r.stats.total_makespan_s > 0.0);
    }

    #[test]
    fn ddr_streaming_only_increases_layer_times() {
        let (norm, x, model) = fixture();
        let base = infer_timed(
            &norm,
            &x,
            &model,
            &PlanParams::default(),
            &TimedOptions { skip_functional: true, ..TimedOptions::default() },
            &ArrayGeometry::default(),
            &CostModel::default(),
        )
        .unwrap();
        let charged = infer_timed(
            &norm,
            &x,
            &model,
            &PlanParams::default(),
            &TimedOptions { skip_functional: true, ddr_streaming: true, ..TimedOptions::default() },
            &ArrayGeometry::default(),
            &CostModel::default(),
        )
        .unwrap();
        for (a, b) in base.stats.layer_makespans_s.iter().zip(&charged.stats.layer_makespans_s) {
            assert!(b >= a);
        }
    }
}
