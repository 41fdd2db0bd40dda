use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ocshield_core::ocspace::oc_score_with;
use ocshield_core::testutil::random_rows;
use ocshield_core::{Kernel, ReferenceSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LEAVES: u16 = 16;

fn scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("oc_score");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (m, rows) in [(50, 1_000), (50, 10_000), (50, 100_000), (200, 10_000)] {
        let class0 = random_rows(&mut rng, rows, m, LEAVES);
        let r = ReferenceSet::from_rows(m, &class0, &[]).expect("valid reference set");
        let query = random_rows(&mut rng, 1, m, LEAVES).pop().expect("one row");
        group.throughput(Throughput::Elements((m * rows) as u64));
        for kernel in [Kernel::Scalar, Kernel::Lanes32, Kernel::Avx2] {
            if !kernel.is_available() {
                continue;
            }
            let id = BenchmarkId::new(kernel.to_string(), format!("m{m}_rows{rows}"));
            group.bench_with_input(id, &query, |b, q| {
                b.iter(|| oc_score_with(&r, q, 0, kernel).expect("score"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, scan);
criterion_main!(benches);
