//! Discrete-event simulation of one GCN layer on the engine array plus the
//! fabric SpMM unit.
//!
//! The dense half of the array computes B = X*W tile by tile, column slab by
//! column slab; tensor-PE tasks for A*B and fabric tasks for the residual
//! become ready as soon as the B column slab they read is complete, so the
//! two products overlap. After the last X*W tile the dense half is
//! reconfigured and joins the A*B pool. A `sequential` policy instead holds
//! every A*B and fabric task behind the reconfiguration barrier, which is
//! the no-pipelining baseline.

use crate::costmodel::{Channel, CostModel};
use crate::error::{Error, Result};
use crate::pegen::{PeKind, PePlan};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeSet};

/// Engine array layout.
///
/// The scheduler treats each array row as one engine: a chain of `cols`
/// tensor PEs that streams tiles as a unit. `xw_rows` rows start as dense
/// engines for X*W and join the A*B pool after reconfiguration; `ab_rows`
/// rows hold the mixed sparse/dense tensor PEs for A*B. One fabric unit
/// processes residual work serially.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    pub xw_rows: usize,
    pub ab_rows: usize,
    /// Tile edge for the dense X*W product.
    pub xw_tile: usize,
    /// Tile edge for the A*B product.
    pub ab_tile: usize,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self { rows: 8, cols: 50, xw_rows: 4, ab_rows: 4, xw_tile: 32, ab_tile: 64 }
    }
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.xw_rows + self.ab_rows != self.rows {
            return Err(Error::Validation(format!(
                "{} X*W rows plus {} A*B rows must equal {} array rows",
                self.xw_rows, self.ab_rows, self.rows
            )));
        }
        if self.rows == 0 || self.cols == 0 || self.xw_rows == 0 || self.ab_rows == 0 {
            return Err(Error::Validation("array geometry needs at least one row per pool".into()));
        }
        if self.xw_tile == 0 || self.ab_tile == 0 {
            return Err(Error::Validation("tile sizes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Problem dimensions of one layer: N nodes, F_in input features, F_out
/// output features, and whether an activation follows the aggregation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LayerDims {
    pub n: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub activation: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// One 32x32 (nominal) tile of B = X*W.
    XwTile { row_tile: usize, slab: usize },
    /// One tile-row of A times one B column slab on tensor PEs.
    AbSlab { tile_row: usize, slab: usize, dense: bool },
    /// The residual times one B column slab on the fabric unit.
    PlSlab { slab: usize },
    /// Rebadge the X*W rows as A*B engines once B is complete.
    Reconfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineClass {
    XwArray,
    AbArray,
    Pl,
    Control,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub kind: TaskKind,
    pub class: EngineClass,
    pub duration: f64,
    pub deps: Vec<usize>,
}

impl Task {
    pub fn label(&self) -> String {
        match &self.kind {
            TaskKind::XwTile { row_tile, slab } => format!("xw({row_tile},{slab})"),
            TaskKind::AbSlab { tile_row, slab, dense } => {
                format!("ab({tile_row},{slab},{})", if *dense { "dense" } else { "sparse" })
            }
            TaskKind::PlSlab { slab } => format!("pl({slab})"),
            TaskKind::Reconfig => "reconfig".to_string(),
        }
    }
}

/// Dependency graph of one layer's tasks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskGraph {
    pub tasks: Vec<Task>,
    pub dims: LayerDims,
}

impl TaskGraph {
    pub fn total_work(&self) -> f64 {
        self.tasks.iter().map(|t| t.duration).sum()
    }

    pub fn count(&self, pred: impl Fn(&Task) -> bool) -> usize {
        self.tasks.iter().filter(|t| pred(t)).count()
    }
}

/// Build the per-layer task graph from a mapping plan.
///
/// B tiles are emitted column-slab-major, so earlier slabs of B complete
/// while later ones are still being produced. An A*B or fabric task for slab
/// `s` depends on every B tile of that slab: the aggregation reads the whole
/// column. Dense tile-rows charge one dense tile product per occupied
/// column tile; sparse tile-rows charge the trip-count work their padded
/// kernels execute, at the padded density's effective rate; fabric slabs
/// charge the fitted fabric time over the whole residual. Ragged edge tiles
/// get proportionally shorter durations. Activation cost is folded into the
/// producing task at one cycle per output element.
pub fn build_task_graph(
    plan: &PePlan,
    dims: LayerDims,
    geom: &ArrayGeometry,
    cost: &CostModel,
) -> Result<TaskGraph> {
    geom.validate()?;
    if plan.rows != plan.cols || plan.rows != dims.n {
        return Err(Error::Shape(format!(
            "plan covers a {}x{} matrix but the layer has n = {}",
            plan.rows, plan.cols, dims.n
        )));
    }
    if dims.f_out == 0 || dims.f_in == 0 {
        return Err(Error::Parameter("feature dimensions must be at least 1".into()));
    }

    let ts = geom.xw_tile;
    let row_tiles = dims.n.div_ceil(ts);
    let slabs = dims.f_out.div_ceil(ts);
    let slab_width = |s: usize| ts.min(dims.f_out - s * ts);
    let mut tasks = Vec::new();

    // B tiles, slab-major. One task is one tile step of the streaming dense
    // array; the inner dimension advances one tile per step.
    for s in 0..slabs {
        let w = slab_width(s);
        for i in 0..row_tiles {
            let h = ts.min(dims.n - i * ts);
            tasks.push(Task {
                id: tasks.len(),
                kind: TaskKind::XwTile { row_tile: i, slab: s },
                class: EngineClass::XwArray,
                duration: cost.dense_tpe_time(h, ts, w),
                deps: Vec::new(),
            });
        }
    }

    let reconfig_id = tasks.len();
    tasks.push(Task {
        id: reconfig_id,
        kind: TaskKind::Reconfig,
        class: EngineClass::Control,
        duration: 0.0,
        deps: (0..reconfig_id).collect(),
    });

    let slab_deps =
        |s: usize| -> Vec<usize> { (s * row_tiles..(s + 1) * row_tiles).collect() };

    let aie_cycle = 1.0 / cost.aie_freq;
    for s in 0..slabs {
        let w = slab_width(s);
        let b_slab_bytes = dims.n * w * 4;
        for asg in &plan.assignments {
            let (dense, base) = match &asg.kind {
                PeKind::Empty | PeKind::Offloaded => continue,
                PeKind::Dense => (
                    true,
                    asg.occupied_tiles as f64
                        * cost.dense_tpe_time(asg.height(), geom.ab_tile, w),
                ),
                PeKind::Sparse(_) => {
                    (false, cost.sparse_time_for_nnz(asg.executed_entries, w, asg.padded_density))
                }
            };
            let act = if dims.activation { (asg.height() * w) as f64 * aie_cycle } else { 0.0 };
            tasks.push(Task {
                id: tasks.len(),
                kind: TaskKind::AbSlab { tile_row: asg.tile_row, slab: s, dense },
                class: EngineClass::AbArray,
                duration: base + cost.transfer_time(b_slab_bytes, Channel::PlAie) + act,
                deps: slab_deps(s),
            });
        }
    }

    if plan.residual_nnz() > 0 {
        let offloaded_rows: usize = plan
            .assignments
            .iter()
            .filter(|a| matches!(a.kind, PeKind::Offloaded))
            .map(|a| a.height())
            .sum();
        for s in 0..slabs {
            let w = slab_width(s);
            let act =
                if dims.activation { (offloaded_rows * w) as f64 * aie_cycle } else { 0.0 };
            tasks.push(Task {
                id: tasks.len(),
                kind: TaskKind::PlSlab { slab: s },
                class: EngineClass::Pl,
                duration: cost.pl_spmm_time(plan.residual_nnz(), w) + act,
                deps: slab_deps(s),
            });
        }
    }

    Ok(TaskGraph { tasks, dims })
}

/// Scheduling policy: `Pipelined` releases A*B and fabric tasks per B column
/// slab; `Sequential` holds them all behind the end of X*W.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulePolicy {
    Pipelined,
    Sequential,
}

impl std::fmt::Display for SchedulePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchedulePolicy::Pipelined => write!(f, "pipelined"),
            SchedulePolicy::Sequential => write!(f, "sequential"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceEvent {
    pub task_id: usize,
    pub task: String,
    pub engine_id: usize,
    pub engine: String,
    pub start: f64,
    pub end: f64,
}

/// Timestamped schedule. Events never overlap on one engine and never start
/// before their dependencies end; the makespan is the latest end time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub policy: SchedulePolicy,
    pub engines: Vec<String>,
    pub events: Vec<TraceEvent>,
    pub makespan: f64,
}

impl ScheduleTrace {
    /// Busy seconds per engine, aligned with `engines`.
    pub fn engine_busy(&self) -> Vec<f64> {
        let mut busy = vec![0.0; self.engines.len()];
        for e in &self.events {
            busy[e.engine_id] += e.end - e.start;
        }
        busy
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("task,engine,start,end\n");
        for e in &self.events {
            out.push_str(&format!("{},{},{},{}\n", e.task, e.engine, e.start, e.end));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct Pool {
    idle: BTreeSet<usize>,
    cursor: usize,
    // FIFO by (ready time, task id).
    queue: BinaryHeap<Reverse<(OrdF64, usize)>>,
}

impl Pool {
    fn new() -> Self {
        Self { idle: BTreeSet::new(), cursor: 0, queue: BinaryHeap::new() }
    }

    /// Round-robin over the idle engines: first id at or after the cursor,
    /// wrapping to the smallest.
    fn take_engine(&mut self) -> Option<usize> {
        let id = self
            .idle
            .range(self.cursor..)
            .next()
            .or_else(|| self.idle.iter().next())
            .copied()?;
        self.idle.remove(&id);
        self.cursor = id + 1;
        Some(id)
    }
}

/// List-scheduling simulation: ready tasks go to idle engines of their
/// class in (ready time, task id) order. Deterministic for identical inputs.
pub fn simulate(tg: &TaskGraph, geom: &ArrayGeometry, policy: SchedulePolicy) -> Result<ScheduleTrace> {
    geom.validate()?;
    let n = tg.tasks.len();
    for (i, t) in tg.tasks.iter().enumerate() {
        if t.id != i {
            return Err(Error::Validation(format!("task {i} carries id {}", t.id)));
        }
        if t.duration < 0.0 || t.duration.is_nan() {
            return Err(Error::Validation(format!("task {i} has invalid duration")));
        }
    }

    // Effective dependency structure; the sequential barrier rides on the
    // reconfiguration task, which already waits for every X*W tile.
    let mut indeg = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let reconfig = tg.tasks.iter().find(|t| t.kind == TaskKind::Reconfig).map(|t| t.id);
    for t in &tg.tasks {
        let mut deps: Vec<usize> = t.deps.clone();
        if policy == SchedulePolicy::Sequential
            && matches!(t.kind, TaskKind::AbSlab { .. } | TaskKind::PlSlab { .. })
        {
            if let Some(r) = reconfig {
                deps.push(r);
            }
        }
        deps.sort_unstable();
        deps.dedup();
        for &d in &deps {
            if d >= n {
                return Err(Error::Validation(format!("task {} depends on missing {d}", t.id)));
            }
            children[d].push(t.id);
        }
        indeg[t.id] = deps.len();
    }

    // Cycle check.
    {
        let mut deg = indeg.clone();
        let mut stack: Vec<usize> = (0..n).filter(|&i| deg[i] == 0).collect();
        let mut seen = 0usize;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &c in &children[v] {
                deg[c] -= 1;
                if deg[c] == 0 {
                    stack.push(c);
                }
            }
        }
        if seen != n {
            return Err(Error::Validation("task graph has a dependency cycle".into()));
        }
    }

    // Engines: X*W rows, A*B rows, one fabric unit, one control slot.
    let mut engines: Vec<(String, EngineClass)> = Vec::new();
    for i in 0..geom.xw_rows {
        engines.push((format!("xw{i}"), EngineClass::XwArray));
    }
    for i in 0..geom.ab_rows {
        engines.push((format!("ab{i}"), EngineClass::AbArray));
    }
    engines.push(("pl0".to_string(), EngineClass::Pl));
    engines.push(("ctl0".to_string(), EngineClass::Control));

    let class_index = |c: EngineClass| match c {
        EngineClass::XwArray => 0usize,
        EngineClass::AbArray => 1,
        EngineClass::Pl => 2,
        EngineClass::Control => 3,
    };
    let mut pools = [Pool::new(), Pool::new(), Pool::new(), Pool::new()];
    for (id, (_, class)) in engines.iter().enumerate() {
        pools[class_index(*class)].idle.insert(id);
    }

    let mut reconfigured = false;
    let mut events: Vec<TraceEvent> = Vec::with_capacity(n);
    // Completion heap ordered by (end time, sequence).
    let mut heap: BinaryHeap<Reverse<(OrdF64, usize, usize, usize)>> = BinaryHeap::new();
    let mut seq = 0usize;

    for i in 0..n {
        if indeg[i] == 0 {
            pools[class_index(tg.tasks[i].class)].queue.push(Reverse((OrdF64(0.0), i)));
        }
    }

    let dispatch = |pools: &mut [Pool; 4],
                        heap: &mut BinaryHeap<Reverse<(OrdF64, usize, usize, usize)>>,
                        events: &mut Vec<TraceEvent>,
                        seq: &mut usize,
                        now: f64| {
        for pool in pools.iter_mut() {
            while !pool.queue.is_empty() && !pool.idle.is_empty() {
                let Reverse((_, task_id)) = pool.queue.pop().unwrap();
                let engine_id = pool.take_engine().expect("idle set checked non-empty");
                let end = now + tg.tasks[task_id].duration;
                events.push(TraceEvent {
                    task_id,
                    task: tg.tasks[task_id].label(),
                    engine_id,
                    engine: engines[engine_id].0.clone(),
                    start: now,
                    end,
                });
                heap.push(Reverse((OrdF64(end), *seq, task_id, engine_id)));
                *seq += 1;
            }
        }
    };

    dispatch(&mut pools, &mut heap, &mut events, &mut seq, 0.0);
    let mut makespan = 0.0f64;
    while let Some(Reverse((OrdF64(now), _, task_id, engine_id))) = heap.pop() {
        makespan = makespan.max(now);

        // Free the engine; X*W rows join the A*B pool after reconfiguration.
        let base_class = engines[engine_id].1;
        let back_to = if base_class == EngineClass::XwArray && reconfigured {
            EngineClass::AbArray
        } else {
            base_class
        };
        pools[class_index(back_to)].idle.insert(engine_id);

        if tg.tasks[task_id].kind == TaskKind::Reconfig {
            reconfigured = true;
            let freed: Vec<usize> =
                pools[class_index(EngineClass::XwArray)].idle.iter().copied().collect();
            for e in freed {
                pools[class_index(EngineClass::XwArray)].idle.remove(&e);
                pools[class_index(EngineClass::AbArray)].idle.insert(e);
            }
        }

        for &c in &children[task_id] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                pools[class_index(tg.tasks[c].class)].queue.push(Reverse((OrdF64(now), c)));
            }
        }
        dispatch(&mut pools, &mut heap, &mut events, &mut seq, now);
    }

    events.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.task_id.cmp(&b.task_id)));
    Ok(ScheduleTrace {
        policy,
        engines: engines.into_iter().map(|(name, _)| name).collect(),
        events,
        makespan,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassUtilization {
    pub class: EngineClass,
    pub engines: usize,
    pub busy_s: f64,
    pub busy_fraction: f64,
    /// Idle engine-seconds across the makespan.
    pub stall_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UtilizationReport {
    pub makespan_s: f64,
    pub classes: Vec<ClassUtilization>,
    /// Total task seconds on tensor-array engines (X*W plus A*B).
    pub aie_work_s: f64,
    /// Total task seconds on the fabric unit.
    pub pl_work_s: f64,
    pub sparse_ab_tasks: usize,
    pub dense_ab_tasks: usize,
    /// Fraction of A*B tensor-PE tasks running on sparse PEs.
    pub sparse_pe_fraction: f64,
}

/// Summarize a trace: per-class busy fractions and stall time, the work
/// split between the tensor arrays and the fabric unit, and the sparse-PE
/// share of the aggregation work.
pub fn utilization_report(tg: &TaskGraph, trace: &ScheduleTrace, geom: &ArrayGeometry) -> UtilizationReport {
    let class_of_engine = |id: usize| -> EngineClass {
        if id < geom.xw_rows {
            EngineClass::XwArray
        } else if id < geom.xw_rows + geom.ab_rows {
            EngineClass::AbArray
        } else if id == geom.xw_rows + geom.ab_rows {
            EngineClass::Pl
        } else {
            EngineClass::Control
        }
    };

    let mut busy = [0.0f64; 4];
    let sizes = [geom.xw_rows, geom.ab_rows, 1usize, 1usize];
    for e in &trace.events {
        let idx = match class_of_engine(e.engine_id) {
            EngineClass::XwArray => 0,
            EngineClass::AbArray => 1,
            EngineClass::Pl => 2,
            EngineClass::Control => 3,
        };
        busy[idx] += e.end - e.start;
    }
    let classes = [EngineClass::XwArray, EngineClass::AbArray, EngineClass::Pl, EngineClass::Control]
        .into_iter()
        .enumerate()
        .map(|(i, class)| {
            let capacity = trace.makespan * sizes[i] as f64;
            ClassUtilization {
                class,
                engines: sizes[i],
                busy_s: busy[i],
                busy_fraction: if capacity > 0.0 { busy[i] / capacity } else { 0.0 },
                stall_s: (capacity - busy[i]).max(0.0),
            }
        })
        .collect();

    let mut aie_work = 0.0;
    let mut pl_work = 0.0;
    let mut sparse_ab = 0usize;
    let mut dense_ab = 0usize;
    for t in &tg.tasks {
        match &t.kind {
            TaskKind::XwTile { .. } => aie_work += t.duration,
            TaskKind::AbSlab { dense, .. } => {
                aie_work += t.duration;
                if *dense {
                    dense_ab += 1;
                } else {
                    sparse_ab += 1;
                }
            }
            TaskKind::PlSlab { .. } => pl_work += t.duration,
            TaskKind::Reconfig => {}
        }
    }
    UtilizationReport {
        makespan_s: trace.makespan,
        classes,
        aie_work_s: aie_work,
        pl_work_s: pl_work,
        sparse_ab_tasks: sparse_ab,
        dense_ab_tasks: dense_ab,
        sparse_pe_fraction: if sparse_ab + dense_ab == 0 {
            0.0
        } else {
            sparse_ab as f64 / (sparse_ab + dense_ab) as f64
        },
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::matcore::CsrMatrix;
    use crate::pegen::{generate_pe_plan, PlanParams};

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn pipelined_never_loses_to_sequential(n in 33usize..160, density in 0.01f64..0.3,
                                               f_out in 1usize..96, seed in 0u64..200) {
            let a = CsrMatrix::random(n, n, density, seed).unwrap();
            let plan = generate_pe_plan(&a, &PlanParams::default()).unwrap();
            let dims = LayerDims { n, f_in: 32, f_out, activation: true };
            let geom = ArrayGeometry::default();
            let tg = build_task_graph(&plan, dims, &geom, &CostModel::default()).unwrap();
            let piped = simulate(&tg, &geom, SchedulePolicy::Pipelined).unwrap();
            let seq = simulate(&tg, &geom, SchedulePolicy::Sequential).unwrap();
            prop_assert!(piped.makespan <= seq.makespan + 1e-15);

            // Dependency safety and engine exclusivity on every run.
            let mut end_of = vec![0.0f64; tg.tasks.len()];
            for e in &piped.events { end_of[e.task_id] = e.end; }
            for e in &piped.events {
                for &d in &tg.tasks[e.task_id].deps {
                    prop_assert!(e.start >= end_of[d] - 1e-15);
                }
            }
            let mut per_engine: Vec<Vec<(f64, f64)>> = vec![Vec::new(); piped.engines.len()];
            for e in &piped.events { per_engine[e.engine_id].push((e.start, e.end)); }
            for spans in &mut per_engine {
                spans.sort_by(|x, y| x.0.total_cmp(&y.0));
                for w in spans.windows(2) {
                    prop_assert!(w[0].1 <= w[1].0 + 1e-15);
                }
            }
        }
    }
}
