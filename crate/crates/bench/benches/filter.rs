use criterion::{criterion_group, criterion_main, Criterion};
use robustdrift_bench::reference_pipeline;
use robustdrift_core::*;
use std::hint::black_box;

fn filters(c: &mut Criterion) {
    let pipeline = reference_pipeline();
    let scenario = pipeline.simulate_scenario(1, 0);
    let mut group = c.benchmark_group("run_filter");
    for kind in FiltrationKind::ALL {
        group.bench_function(kind.label(), |b| {
            b.iter(|| pipeline.filter(kind, black_box(&scenario)).unwrap())
        });
    }
    group.finish();
}

fn scenario(c: &mut Criterion) {
    let pipeline = reference_pipeline();
    c.bench_function("simulate_scenario", |b| {
        b.iter(|| pipeline.simulate_scenario(1, black_box(7)))
    });
}

criterion_group!(benches, filters, scenario);
criterion_main!(benches);
