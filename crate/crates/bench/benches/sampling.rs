use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use snis::rng::{self, Purpose};
use snis::sampling::{
    draw_excluding_target, draw_with_replacement, draw_without_replacement, InclusionTable,
    NoiseDistribution,
};

fn sampling(c: &mut Criterion) {
    let num_classes = 50_000;
    let dist = NoiseDistribution::log_uniform(num_classes).unwrap();
    let reduced = NoiseDistribution::log_uniform(num_classes - 1).unwrap();
    let mut rng = rng::stream(0, Purpose::Bench, 0, 0);
    let mut group = c.benchmark_group("sampling");
    for k in [8usize, 128, 1024] {
        group.bench_with_input(BenchmarkId::new("with_replacement", k), &k, |b, &k| {
            b.iter(|| black_box(draw_with_replacement(&dist, k, &mut rng)))
        });
        let table = InclusionTable::exact(&dist, k).unwrap();
        group.bench_with_input(BenchmarkId::new("without_replacement", k), &k, |b, _| {
            b.iter(|| black_box(draw_without_replacement(&dist, &table, &mut rng)))
        });
        group.bench_with_input(BenchmarkId::new("excluding_target", k), &k, |b, &k| {
            b.iter(|| black_box(draw_excluding_target(&reduced, k, 17, &mut rng).unwrap()))
        });
    }
    group.sample_size(10);
    group.bench_function("inclusion_table_k128", |b| {
        b.iter(|| black_box(InclusionTable::exact(&dist, 128).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, sampling);
criterion_main!(benches);
