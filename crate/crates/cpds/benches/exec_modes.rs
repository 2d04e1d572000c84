use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cpds::bundled::load;
use cpds::machine::{collect_runs, eps_contract_with, explore_with, Caps};
use cpds::par::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn exec_modes(c: &mut Criterion) {
    let mut g = c.benchmark_group("explore");
    let spec = load("colret-2").unwrap();
    let caps = Caps { max_nodes: 50_000, ..Caps::depth(9) };
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("colret-2", name), &exec, |b, &e| b.iter(|| explore_with(&spec, caps, e)));
    }
    g.finish();

    let mut g = c.benchmark_group("eps_contract");
    let spec = load("exp-tree-2").unwrap();
    let graph = explore_with(&spec, Caps { max_nodes: 50_000, ..Caps::letters(14) }, Exec::Parallel);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("exp-tree-2", name), &exec, |b, &e| b.iter(|| eps_contract_with(&graph, true, e)));
    }
    g.finish();

    let mut g = c.benchmark_group("collect_runs");
    let spec = load("ret-3").unwrap();
    let start = spec.initial_config();
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("ret-3", name), &exec, |b, &e| b.iter(|| collect_runs(&spec, &start, 7, e)));
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = exec_modes
}
criterion_main!(benches);
