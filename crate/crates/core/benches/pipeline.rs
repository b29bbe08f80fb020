//! Sequential vs rayon-sharded tree building, and per-run breakdowns.
//!
//! `cargo bench -p stacksurgeon` compares both strategies in one run; build
//! with `--no-default-features` to see the sequential-only configuration.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stacksurgeon::analyze::{breakdown_for_runs, AnalysisConfig};
use stacksurgeon::par;
use stacksurgeon::{CallTree, RunLabel};

const NAMES: &[&str] = &[
    "main", "simulate", "tick", "RubyPort::recvAtomic", "Ruby::Sequencer::makeRequest",
    "BaseCache::recvAtomic", "Cache::access", "EventQueue::serviceOne", "pybind11::dispatcher",
    "MemCtrl::recvTimingReq", "DRAMInterface::doBurstAccess", "O3CPU::tick",
];

fn chains(n: usize, seed: u64) -> Vec<Vec<&'static str>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let depth = rng.gen_range(3..24);
            let mut chain = vec!["main", "simulate", "tick"];
            chain.extend((3..depth).map(|_| NAMES[rng.gen_range(3..NAMES.len())]));
            chain
        })
        .collect()
}

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_tree");
    for n in [10_000usize, 100_000, 400_000] {
        let input = chains(n, 42);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("sequential", n), &input, |b, input| {
            b.iter(|| par::build_tree_sequential(black_box(input)))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &input, |b, input| {
            b.iter(|| par::build_tree_parallel(black_box(input)))
        });
    }
    group.finish();
}

fn breakdowns(c: &mut Criterion) {
    let config = AnalysisConfig::new("tick")
        .category("ruby", "Ruby*")
        .category("cache", "*Cache*")
        .category("memory", "*Mem*")
        .deny("pybind11::*");
    let runs: Vec<(RunLabel, CallTree)> = (0..32)
        .map(|i| (RunLabel::new(format!("run{i:02}")), par::build_tree_sequential(&chains(20_000, i))))
        .collect();
    let mut group = c.benchmark_group("breakdown_for_runs");
    group.throughput(Throughput::Elements(runs.len() as u64));
    group.bench_function(if par::is_parallel() { "parallel" } else { "sequential" }, |b| {
        b.iter(|| breakdown_for_runs(black_box(&runs), &config).unwrap())
    });
    group.bench_function("sequential_loop", |b| {
        b.iter(|| {
            for (_, tree) in &runs {
                black_box(stacksurgeon::analyze::aggregate(tree, &config).unwrap());
            }
        })
    });
    group.finish();
}

criterion_group!(benches, build, breakdowns);
criterion_main!(benches);
