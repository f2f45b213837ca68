use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flowforge_bench::random_flow;
use flowforge_core::{build_plan, parse_flow, sequential_plan, serialize_flow, validate, CostModel, Registry};

fn planning(c: &mut Criterion) {
    let reg = Registry::standard();
    let mut g = c.benchmark_group("plan");
    for n in [50, 200, 1000] {
        let flow = random_flow(n, 12, 42);
        g.bench_with_input(BenchmarkId::new("optimized", n), &flow, |b, f| {
            b.iter(|| build_plan(black_box(f), &reg, &CostModel::unit()).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &flow, |b, f| {
            b.iter(|| sequential_plan(black_box(f)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("validate", n), &flow, |b, f| b.iter(|| validate(black_box(f), &reg)));
    }
    g.finish();
}

fn flow_documents(c: &mut Criterion) {
    let reg = Registry::standard();
    let text = serialize_flow(&random_flow(500, 12, 7));
    c.bench_function("parse_flow/500", |b| b.iter(|| parse_flow(black_box(&text), &reg).unwrap()));
}

criterion_group!(benches, planning, flow_documents);
criterion_main!(benches);
