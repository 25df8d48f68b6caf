use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use occsynth::exec::{map_ordered, Execution};
use occsynth::ocp::{builtin_problem, normalize_inputs};
use occsynth::relaxation::{assemble, RelaxationConfig};
use occsynth::sdp::{solve, SolverSettings};

/// Solves a batch of relaxation orders, once in sequence and once on a pool.
fn orders(c: &mut Criterion) {
    let np = normalize_inputs(&builtin_problem("di_lqr").unwrap()).unwrap();
    let problems: Vec<_> = [2, 3, 3, 2]
        .iter()
        .map(|&k| assemble(&np, &RelaxationConfig::new(k)).unwrap())
        .collect();
    let settings = SolverSettings::default();
    let mut group = c.benchmark_group("orders");
    group.sample_size(10);
    for (label, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::with_jobs(4)),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(label), &exec, |b, &exec| {
            b.iter(|| {
                map_ordered(problems.iter().collect(), exec, |p| {
                    solve(p, &settings).unwrap().objective
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, orders);
criterion_main!(benches);
