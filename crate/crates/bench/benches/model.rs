use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kbdialog_bench::fixture;
use kbdialog_core::training::{train_distant, TrainOptions};
use kbdialog_core::Model;

fn retrieve(c: &mut Criterion) {
    let mut group = c.benchmark_group("retrieve");
    for rows in [2, 4, 8] {
        let f = fixture(1, rows, false);
        let d = &f.data[0];
        let h = d.history(d.turns.len() - 1);
        group.bench_with_input(BenchmarkId::from_parameter(rows), &rows, |b, _| {
            b.iter(|| f.model.retrieve(&h, &d.kb).unwrap())
        });
    }
    group.finish();
}

fn generate(c: &mut Criterion) {
    let f = fixture(1, 8, false);
    let d = &f.data[0];
    let h = d.history(0);
    let r = f.model.retrieve(&h, &d.kb).unwrap();
    c.bench_function("generate/20", |b| b.iter(|| f.model.generate(&h, &d.kb, &r, 20).unwrap()));
}

fn train_step(c: &mut Criterion) {
    let f = fixture(1, 8, true);
    c.bench_function("train/one_dialogue", |b| {
        b.iter_batched(
            || Model::new(f.model.meta.clone(), 0).unwrap(),
            |mut m| train_distant(&mut m, &f.data, &f.labels, &f.config, &TrainOptions::default()).unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = retrieve, generate, train_step
}
criterion_main!(benches);
