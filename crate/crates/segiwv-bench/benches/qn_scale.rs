use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use segiwv_bench::gaussian_sample;

fn bench_qn(c: &mut Criterion) {
    let mut group = c.benchmark_group("qn_scale");
    for &n in &[50usize, 500, 5000] {
        let sample = gaussian_sample(n, 9);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| segiwv::qn_scale(&sample))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_qn);
criterion_main!(benches);
