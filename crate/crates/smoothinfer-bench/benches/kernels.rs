//! Micro-benchmarks for the hot kernels: inference oracles, simplex
//! projection, and the smoothed hinge through the full feature stack.
//!
//! Run with `cargo bench -p smoothinfer-bench`; pass a substring to select
//! a group, e.g. `cargo bench -p smoothinfer-bench chain`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use smoothinfer::chain::{exp_oracle_chain, forward_backward, topk_viterbi};
use smoothinfer::smoothing::project_simplex;
use smoothinfer::tree::{sum_product_tree, topk_max_product_tree};
use smoothinfer::{ScoreModel, SmoothingConfig, TaggingModel};
use smoothinfer_bench::{chain_potentials, random_scores, tagging_setup, tree_potentials};
use std::hint::black_box;

fn bench_chain_oracles(c: &mut Criterion) {
    let pot = chain_potentials(20, 8, 1);
    let mut group = c.benchmark_group("chain_p20_l8");
    for k in [1usize, 5, 25] {
        group.bench_with_input(BenchmarkId::new("topk_viterbi", k), &k, |b, &k| {
            b.iter(|| topk_viterbi(black_box(&pot), k).unwrap())
        });
    }
    group.bench_function("forward_backward", |b| {
        b.iter(|| forward_backward(black_box(&pot)).unwrap())
    });
    group.bench_function("exp_oracle_mu_0.1", |b| {
        b.iter(|| exp_oracle_chain(black_box(&pot), 0.1).unwrap())
    });
    group.finish();
}

fn bench_tree_oracles(c: &mut Criterion) {
    let pot = tree_potentials(20, 8, 2);
    let mut group = c.benchmark_group("tree_n20_l8");
    for k in [1usize, 5, 25] {
        group.bench_with_input(BenchmarkId::new("topk_max_product", k), &k, |b, &k| {
            b.iter(|| topk_max_product_tree(black_box(&pot), k).unwrap())
        });
    }
    group.bench_function("sum_product", |b| {
        b.iter(|| sum_product_tree(black_box(&pot)).unwrap())
    });
    group.finish();
}

fn bench_projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("project_simplex");
    for len in [16usize, 1024, 65_536] {
        let z = random_scores(len, 3);
        group.bench_with_input(BenchmarkId::from_parameter(len), &z, |b, z| {
            b.iter(|| project_simplex(black_box(z)).unwrap())
        });
    }
    group.finish();
}

fn bench_smoothed_hinge(c: &mut Criterion) {
    let (data, features) = tagging_setup(50, 10, 12);
    let model = TaggingModel::new(&features, &data).unwrap();
    let w = random_scores(model.dim(), 4);
    let entropy = SmoothingConfig::entropy(0.1).unwrap();
    let topk = SmoothingConfig::topk_l2(0.1, 5).unwrap();
    let mut group = c.benchmark_group("smoothed_hinge_p10_t5_d4120");
    group.bench_function("entropy", |b| {
        b.iter(|| smoothinfer::loss::smoothed_hinge(&model, 0, black_box(&w), &entropy).unwrap())
    });
    group.bench_function("topk_l2_k5", |b| {
        b.iter(|| smoothinfer::loss::smoothed_hinge(&model, 0, black_box(&w), &topk).unwrap())
    });
    group.finish();
}

criterion_group!(
    kernels,
    bench_chain_oracles,
    bench_tree_oracles,
    bench_projection,
    bench_smoothed_hinge
);
criterion_main!(kernels);
