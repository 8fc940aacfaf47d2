use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use snis::train::{noise_for, Trainer};
use snis_bench::{batches, config};

fn train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_step");
    group.sample_size(20);
    for criterion in ["ce", "nce", "is", "mode2", "mode3"] {
        let cfg = config(&[
            ("C", "5000"),
            ("state_cap", "16"),
            ("alpha", "0.5"),
            ("dim", "64"),
            ("combiner", "average"),
            ("batch_size", "32"),
            ("K", "128"),
            ("criterion", criterion),
        ]);
        let (corpus, batches) = batches(&cfg, 5000);
        let mut trainer = Trainer::new(&cfg, noise_for(&cfg, &corpus).unwrap()).unwrap();
        let mut index = 0;
        group.bench_function(BenchmarkId::new(criterion, "C=5000,K=128"), |b| {
            b.iter(|| {
                let batch = &batches[index % batches.len()];
                index += 1;
                black_box(trainer.step(batch, 0, index).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, train_step);
criterion_main!(benches);
