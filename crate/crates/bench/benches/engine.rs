use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use flowforge_core::bench::reference_bench_flow;
use flowforge_core::components::io::{write_csv, VectorMode};
use flowforge_core::sql::{run_query, Catalog};
use flowforge_core::synth::{synth_dataset, SynthOptions};
use flowforge_core::{build_plan, codec, sequential_plan, CostModel, Engine, Registry, RunId, Store, StoreConfig};

fn codec_round_trip(c: &mut Criterion) {
    let frame = synth_dataset(&SynthOptions::default());
    let bytes = codec::encode_frame(&frame);
    c.bench_function("codec/encode_5k", |b| b.iter(|| codec::encode_frame(black_box(&frame))));
    c.bench_function("codec/decode_5k", |b| b.iter(|| codec::decode_frame(black_box(&bytes)).unwrap()));
}

fn store_spill(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let frame = synth_dataset(&SynthOptions { rows: 1000, ..SynthOptions::default() });
    let size = frame.size_bytes();
    let store = Store::new(StoreConfig::new(size * 3, dir.path())).unwrap();
    let mut n = 0u64;
    // each iteration opens a run, overfills it by two frames, reads all back
    c.bench_function("store/put_get_spill", |b| {
        b.iter(|| {
            n += 1;
            let run = RunId::new(format!("r{n}"));
            store.open_run(&run, None).unwrap();
            let hs: Vec<_> = (0..5).map(|_| store.put_frame(&run, frame.clone()).unwrap()).collect();
            for h in &hs {
                black_box(store.get_frame(h).unwrap());
            }
            store.drop_run(&run);
        })
    });
}

fn sql(c: &mut Criterion) {
    let mut catalog = Catalog::new();
    catalog.insert("crimes", synth_dataset(&SynthOptions::default()));
    let q = "SELECT category, COUNT(*) AS n, AVG(amount) AS mean FROM crimes WHERE \"count\" > 2 GROUP BY category ORDER BY n DESC";
    c.bench_function("sql/group_by_5k", |b| b.iter(|| run_query(black_box(q), &catalog, 10).unwrap()));
}

fn execution(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_dataset(&SynthOptions { rows: 1000, ..SynthOptions::default() });
    write_csv(&data, &dir.path().join("data.csv"), VectorMode::Error, None).unwrap();
    let registry = Arc::new(Registry::standard());
    let store = Arc::new(Store::new(StoreConfig::new(256 << 20, dir.path().join("spill"))).unwrap());
    let engine = Engine::new(store, registry.clone(), dir.path());
    let flow = reference_bench_flow(0.0, 0.0);
    let plans = [
        ("optimized", build_plan(&flow, &registry, &CostModel::unit()).unwrap()),
        ("sequential", sequential_plan(&flow).unwrap()),
    ];
    let mut g = c.benchmark_group("run/reference_1k");
    g.sample_size(10);
    let mut n = 0u64;
    for (name, plan) in &plans {
        g.bench_function(*name, |b| {
            b.iter_batched(
                || {
                    n += 1;
                    engine.create_context(RunId::new(format!("{name}{n}")), 4, None).unwrap()
                },
                |ctx| ctx.run_plan(&flow, plan, None).unwrap(),
                BatchSize::PerIteration,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, codec_round_trip, store_spill, sql, execution);
criterion_main!(benches);
