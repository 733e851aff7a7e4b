use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use segiwv_bench::synthetic_series;

fn bench_dp(c: &mut Criterion) {
    let mut group = c.benchmark_group("dp_segment");
    for &n in &[200usize, 400, 1000] {
        let (_, values) = synthetic_series(n, 5);
        let weights = vec![1.0; n];
        group.bench_with_input(BenchmarkId::new("k_max_30", n), &n, |b, _| {
            b.iter(|| segiwv::dp_segment(&values, &weights, 30).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_dp);
criterion_main!(benches);
