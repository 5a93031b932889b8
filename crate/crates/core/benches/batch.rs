use std::hint::black_box;

use contina::batch::{solve_batch, solve_batch_sequential};
use contina::engine::{Runtime, RuntimeConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const NREV: &str = "
app([], Ys, Ys).
app([X|Xs], Ys, [X|Zs]) :- app(Xs, Ys, Zs).
nrev([], []).
nrev([X|Xs], Zs) :- nrev(Xs, Ys), app(Ys, [X], Zs).
";

fn queries(n: usize, len: usize) -> Vec<String> {
    (0..n).map(|i| format!("numlist({i}, {}, L), nrev(L, R)", i + len)).collect()
}

fn batch(c: &mut Criterion) {
    let rt = Runtime::new(RuntimeConfig::default());
    rt.consult_str(NREV).unwrap();
    let mut group = c.benchmark_group("nrev_batch");
    for n in [8usize, 64] {
        let qs = queries(n, 60);
        group.bench_with_input(BenchmarkId::new("sequential", n), &qs, |b, qs| {
            b.iter(|| black_box(solve_batch_sequential(&rt, qs)))
        });
        group.bench_with_input(BenchmarkId::new("solve_batch", n), &qs, |b, qs| {
            b.iter(|| black_box(solve_batch(&rt, qs)))
        });
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
