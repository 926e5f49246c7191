use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use dmpc::harness::stream::{generate, parse, GenParams};
use dmpc::harness::{run, Algo, RunConfig};

fn updates(c: &mut Criterion) {
    let mut group = c.benchmark_group("stream");
    group.sample_size(10);
    for n in [64usize, 256] {
        let text = generate(GenParams { n, updates: 4 * n, insert_prob: 0.7, weighted: true, seed: 1 }).unwrap();
        let st = parse(&text).unwrap();
        group.throughput(Throughput::Elements(st.updates.len() as u64));
        for algo in [Algo::Mm, Algo::Mm32, Algo::Cc, Algo::Mst, Algo::Seqsim] {
            let cfg = RunConfig::new(algo);
            group.bench_with_input(BenchmarkId::new(algo.name(), n), &st, |b, st| b.iter(|| run(st, &cfg).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, updates);
criterion_main!(benches);
