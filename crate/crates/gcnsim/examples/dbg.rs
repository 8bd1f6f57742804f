use gcnsim::costmodel::CostModel;
use gcnsim::matcore::{normalize_adjacency, DenseMatrix};
use gcnsim::pegen::{generate_pe_plan, PlanParams};
use gcnsim::pipesim::*;
use gcnsim::reorder::{apply_permutation, gen_sbm, reorder_graph, Permutation};

fn main() {
    let a = gen_sbm(512, 8, 0.3, 0.01, 7).unwrap();
    let shuffled = apply_permutation(&a, &Permutation::shuffled(512, 7)).unwrap();
    let norm_shuf = normalize_adjacency(&shuffled).unwrap();
    let p = reorder_graph(&norm_shuf, 8, 7).unwrap();
    let reord = apply_permutation(&norm_shuf, &p).unwrap();

    let cost = CostModel::default();
    let geom = ArrayGeometry::default();
    for (name, m) in [("reordered", &reord), ("shuffled", &norm_shuf)] {
        let plan = generate_pe_plan(m, &PlanParams::default()).unwrap();
        let dims = LayerDims { n: 512, f_in: 96, f_out: 128, activation: true };
        let tg = build_task_graph(&plan, dims, &geom, &cost).unwrap();
        let trace = simulate(&tg, &geom, SchedulePolicy::Pipelined).unwrap();
        println!("== {name}: makespan {:.2}us, total work {:.2}us", trace.makespan*1e6, tg.total_work()*1e6);
        for asg in &plan.assignments {
            println!("  tr {} kind {} padded {:.4} kept {} executed {}",
                asg.tile_row, asg.kind.name(), asg.padded_density.value(), asg.kept_nnz(), asg.executed_entries);
        }
        // durations by kind
        let mut xw = 0.0; let mut ab_d = 0.0; let mut ab_s = 0.0; let mut pl = 0.0;
        for t in &tg.tasks {
            match t.kind {
                TaskKind::XwTile{..} => xw += t.duration,
                TaskKind::AbSlab{dense: true, ..} => ab_d += t.duration,
                TaskKind::AbSlab{dense: false, ..} => ab_s += t.duration,
                TaskKind::PlSlab{..} => pl += t.duration,
                TaskKind::Reconfig => {}
            }
        }
        println!("  work: xw {:.1}us ab_dense {:.1}us ab_sparse {:.1}us pl {:.1}us", xw*1e6, ab_d*1e6, ab_s*1e6, pl*1e6);
        let last: Vec<_> = trace.events.iter().filter(|e| e.end > trace.makespan - 80e-6).collect();
        for e in last.iter().take(12) {
            println!("  tail: {} on {} [{:.1}, {:.1}]us", e.task, e.engine, e.start*1e6, e.end*1e6);
        }
    }
}
