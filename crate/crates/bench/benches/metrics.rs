use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lexvar_bench::distributions;
use lexvar_core::metrics::{cosine_distance, jensen_shannon_distance};

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metric");
    for len in [2, 8, 32] {
        let d = distributions(2, len, 7);
        group.bench_with_input(BenchmarkId::new("cosine", len), &d, |b, d| {
            b.iter(|| cosine_distance(black_box(&d[0]), black_box(&d[1])).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("jsd", len), &d, |b, d| {
            b.iter(|| jensen_shannon_distance(black_box(&d[0]), black_box(&d[1])).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, metrics);
criterion_main!(benches);
