use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scalesync_bench::{cycle_scenario, reference_protocols};
use scalesync_core::netsim;

fn bench_simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_1000_steps");
    group.sample_size(20);
    for p in reference_protocols() {
        for agents in [10, 60] {
            let s = cycle_scenario(p.clone(), agents, 1000);
            group.bench_with_input(BenchmarkId::new(p.kind().label(), agents), &s, |b, s| {
                b.iter(|| netsim::simulate(s).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_simulate);
criterion_main!(benches);
