use criterion::{criterion_group, criterion_main, Criterion};
use radcom::config::SystemConfig;
use radcom::harness::{run_sweep, Execution, Scheme, SweepSpec, SweepVar};

fn small_sweep(c: &mut Criterion) {
    let base = SystemConfig { n_users: 3, n_irs: 16, ..SystemConfig::default() };
    let spec = SweepSpec {
        sweep_var: SweepVar::M,
        values: vec![8.0, 16.0],
        trials: 4,
        schemes: vec![Scheme::PenaltyCase1, Scheme::PenaltyCase1CommOnly],
    };
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    g.bench_function("sequential", |b| b.iter(|| run_sweep(&spec, &base, 7, Execution::Sequential).unwrap()));
    g.bench_function("parallel", |b| b.iter(|| run_sweep(&spec, &base, 7, Execution::Parallel { threads }).unwrap()));
    g.finish();
}

criterion_group!(benches, small_sweep);
criterion_main!(benches);
