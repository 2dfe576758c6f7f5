use std::hint::black_box;

use bpida::bpida::SharedStack;
use bpida::concurrent::ConcurrentStack;
use bpida::puzzle::{manhattan, manhattan_delta};
use bpida::rootset::create_root_set;
use bpida::{Operator, RootSetConfig};
use bpida_bench::easy_korf;
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn heuristic(c: &mut Criterion) {
    let inst = easy_korf();
    c.bench_function("manhattan_full", |b| b.iter(|| manhattan(black_box(&inst.start), &inst.goal)));
    c.bench_function("manhattan_delta", |b| {
        b.iter(|| manhattan_delta(black_box(&inst.start), Operator::Up, &inst.goal))
    });
}

fn stacks(c: &mut Criterion) {
    c.bench_function("shared_stack_put_pop_32_lanes", |b| {
        let mut out = Vec::with_capacity(8);
        b.iter_batched(
            || SharedStack::<u64>::new(256),
            |mut s| {
                for v in 0..256 {
                    s.put(v).unwrap();
                }
                while s.parallel_pop(32, 4, &mut out) > 0 {}
                s
            },
            BatchSize::SmallInput,
        )
    });
    c.bench_function("concurrent_stack_put_pop", |b| {
        let stack = ConcurrentStack::<u64>::new(1024);
        let mut out = Vec::with_capacity(8);
        b.iter(|| {
            let (_, r) = stack.put_all((0..8).collect(), 0);
            r.unwrap();
            stack.pop_batch(8, &mut out);
            stack.retire(out.len());
        })
    });
}

fn root_sets(c: &mut Criterion) {
    let inst = easy_korf();
    c.bench_function("root_set_1536", |b| {
        b.iter(|| create_root_set(black_box(&inst), 1536, RootSetConfig::default()))
    });
}

criterion_group!(benches, heuristic, stacks, root_sets);
criterion_main!(benches);
