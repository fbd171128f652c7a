//! Criterion benchmarks for the hot paths of a regret study.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlcb_core::elimination::{pull_limit, ArmAggregate};
use tlcb_core::environment::{generate_aux_dataset, sample_target_context};
use tlcb_core::geometry::bin_of;
use tlcb_core::harness::run_trial;
use tlcb_core::{Algorithm, AuxIndex, BinId, BoundParams, ExperimentConfig, RewardSpec, SourceSpec};

fn geometry(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let points: Vec<Vec<f64>> = (0..1024).map(|_| sample_target_context(&mut rng, 2)).collect();
    c.bench_function("bin_of/level8", |b| {
        b.iter(|| {
            for x in &points {
                black_box(bin_of(8, x).unwrap());
            }
        })
    });
}

fn limits(c: &mut Criterion) {
    let p = BoundParams { beta: 0.8, c_beta: 1.74, gamma: 1.0, kappa: 1.0, n_q: 20_000, n_p: 60_000, dim: 2 };
    let bin = BinId::new(4, vec![3, 7]).unwrap();
    c.bench_function("pull_limit", |b| {
        b.iter(|| black_box(pull_limit(&ArmAggregate::from_aux(black_box(17), 0.5), &bin, &p)))
    });
}

fn aux_queries(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let env = RewardSpec::standard_random(0.8, 0.05, &mut rng).unwrap();
    let src = SourceSpec { gamma: 1.0, mu: vec![0.5, 0.5], n_p: 60_000 };
    let data = generate_aux_dataset(&env, &src, &mut rng).unwrap();
    let index = AuxIndex::new(&data);
    let bins = BinId::new(3, vec![1, 1]).unwrap().children();
    let mut group = c.benchmark_group("aux_stats");
    group.bench_function("morton_index", |b| {
        b.iter(|| {
            for bin in &bins {
                black_box(tlcb_core::elimination::AuxStats::arm_stats(&index, bin, 2));
            }
        })
    });
    group.bench_function("linear_scan", |b| {
        b.iter(|| {
            for bin in &bins {
                black_box(tlcb_core::elimination::AuxStats::arm_stats(&data, bin, 2));
            }
        })
    });
    group.finish();
}

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("trial");
    group.sample_size(10);
    for algo in [Algorithm::Baseline, Algorithm::Transfer, Algorithm::Adaptive] {
        let mut config = ExperimentConfig::new(algo, 5_000).unwrap();
        if algo != Algorithm::Baseline {
            config.source.n_p = 15_000;
        }
        group.bench_with_input(BenchmarkId::from_parameter(algo), &config, |b, config| {
            b.iter(|| black_box(run_trial(config, 0).unwrap()))
        });
    }
    group.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    geometry(c);
    limits(c);
    aux_queries(c);
    trials(c);
}
