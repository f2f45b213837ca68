mod support;

use std::sync::atomic::{AtomicUsize, Ordering};

use flowforge_core::executor::TaskEvent;
use flowforge_core::frame::Column;
use flowforge_core::{build_plan, sequential_plan, ContextStatus, CostModel, FlowNode, RunId};

fn overall_accuracy(out: &support::Outcome) -> (f64, f64) {
    let eval = &out.tables["evaluate"];
    let n = eval.row_count();
    let Column::Int64(support) = eval.column("support").unwrap() else { panic!() };
    let Column::Float64(acc) = eval.column("accuracy").unwrap() else { panic!() };
    let total = support[n - 1].unwrap() as f64;
    let majority = support[..n - 1].iter().map(|s| s.unwrap()).max().unwrap() as f64 / total;
    (acc[n - 1].unwrap(), majority)
}

#[test]
fn pipeline_writes_report_and_registers_tables() {
    let dir = tempfile::tempdir().unwrap();
    support::write_synth(dir.path(), 600, 1);
    let engine = support::engine(dir.path());
    let flow = support::load_flow("flows/pipeline.json");
    let plan = build_plan(&flow, engine.registry(), &CostModel::unit()).unwrap();
    let out = support::run_flow(&engine, &flow, &plan, "p", 2);
    assert_eq!(out.record.status, ContextStatus::Finished, "{:?}", out.record.error);
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.starts_with("class,support,predicted,correct,accuracy\n"));
    assert!(report.lines().last().unwrap().starts_with("overall,"));
    assert!(out.tables.contains_key("split_train") && out.tables.contains_key("split_test"));
    assert!(!out.tables.contains_key("fit"), "artifacts are not tables");
    let (acc, majority) = overall_accuracy(&out);
    assert!(acc > majority, "{acc} vs {majority}");
}

#[test]
fn forest_variant_beats_baseline() {
    let dir = tempfile::tempdir().unwrap();
    support::write_synth(dir.path(), 1500, 2);
    let engine = support::engine(dir.path());
    let mut flow = support::load_flow("flows/pipeline.json");
    let fit = flow.nodes.iter_mut().find(|n| n.id == "fit").unwrap();
    *fit = FlowNode::new("fit", "random_forest").param("n_trees", 15i64).param("seed", 3i64);
    let plan = build_plan(&flow, engine.registry(), &CostModel::unit()).unwrap();
    let out = support::run_flow(&engine, &flow, &plan, "forest", 2);
    assert_eq!(out.record.status, ContextStatus::Finished, "{:?}", out.record.error);
    let (acc, majority) = overall_accuracy(&out);
    assert!(acc > majority + 0.1, "{acc} vs {majority}");
}

#[test]
fn tight_budget_spills_without_changing_results() {
    let dir = tempfile::tempdir().unwrap();
    support::write_synth(dir.path(), 500, 4);
    let engine = support::engine(dir.path());
    let flow = support::load_flow("flows/pipeline.json");
    let plan = build_plan(&flow, engine.registry(), &CostModel::unit()).unwrap();
    let roomy = support::run_flow(&engine, &flow, &plan, "roomy", 2);

    let ctx = engine.create_context(RunId::new("tight"), 2, Some(1_500_000)).unwrap();
    let rec = ctx.run_plan(&flow, &plan, None).unwrap();
    assert_eq!(rec.status, ContextStatus::Finished, "{:?}", rec.error);
    assert!(engine.store().usage(ctx.run_id()).disk_bytes > 0, "nothing spilled");
    for (name, bytes) in &roomy.frames {
        let f = ctx.table(name).unwrap();
        assert_eq!(&flowforge_core::codec::encode_frame(&f), bytes, "{name}");
    }
    assert!(engine.store().usage(ctx.run_id()).memory_bytes <= 1_500_000);
}

#[test]
fn missing_input_fails_first_node_and_skips_rest() {
    let dir = tempfile::tempdir().unwrap();
    let engine = support::engine(dir.path());
    let flow = support::load_flow("flows/pipeline.json");
    let plan = build_plan(&flow, engine.registry(), &CostModel::unit()).unwrap();
    let out = support::run_flow(&engine, &flow, &plan, "missing", 2);
    assert_eq!(out.record.status, ContextStatus::Failed);
    assert_eq!(out.record.failed_node.as_deref(), Some("read"));
    assert_eq!(out.record.skipped.len(), flow.nodes.len() - 1);
    assert!(out.record.error.unwrap().contains("data.csv"));
}

#[test]
fn progress_reports_every_task() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("in.csv"), "x,y\n1,2\n").unwrap();
    let engine = support::engine(dir.path());
    let flow = support::load_flow("flows/diamond.json");
    let plan = sequential_plan(&flow).unwrap();
    let (started, finished) = (AtomicUsize::new(0), AtomicUsize::new(0));
    let progress = |e: TaskEvent| match e {
        TaskEvent::Started { .. } => {
            started.fetch_add(1, Ordering::SeqCst);
        }
        TaskEvent::Finished { .. } => {
            finished.fetch_add(1, Ordering::SeqCst);
        }
        _ => {}
    };
    let ctx = engine.create_context(RunId::new("events"), 1, None).unwrap();
    let rec = ctx.run_plan(&flow, &plan, Some(&progress)).unwrap();
    assert_eq!(rec.status, ContextStatus::Finished);
    assert_eq!(started.load(Ordering::SeqCst), 5);
    assert_eq!(finished.load(Ordering::SeqCst), 5);
    assert_eq!(rec.waves.len(), 5);
}

#[test]
fn optimized_diamond_has_four_waves() {
    let engine = support::engine(tempfile::tempdir().unwrap().path());
    let flow = support::load_flow("flows/diamond.json");
    let plan = build_plan(&flow, engine.registry(), &CostModel::unit()).unwrap();
    assert_eq!(plan.waves, vec![vec!["A"], vec!["B", "C"], vec!["D"], vec!["E"]]);
    assert_eq!(plan.critical_path.path.len(), 4);
}
