//! Throughput of the data-parallel stages under different thread budgets.
//!
//! With the `parallel` feature (default), each stage runs on scoped rayon
//! pools of 1, 2, and all cores, so one report compares sequential and
//! parallel schedules; the pool size never changes results. Compiled with
//! `--no-default-features` the same benches run on the plain sequential
//! code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use srg_core::classify::{evaluate, EvalOptions, Protocol};
use srg_core::cluster::kmeans;
use srg_core::data::compute_prototypes;
use srg_core::srg::{a_step, build_locality, fit, Hyperparams, LocalityMode};
use srg_core::synth::{generate, SyntheticData, SyntheticSpec};

fn bench_data() -> SyntheticData {
    let spec = SyntheticSpec {
        n_seen: 32,
        n_unseen: 8,
        image_dim: 48,
        semantic_dim: 48,
        sparsity: 3,
        scale: 1.0,
        noise_sigma: 0.02,
        shift: 0.0,
        samples_per_class: 20,
        seed: 1,
    };
    generate(&spec).unwrap()
}

fn hp() -> Hyperparams {
    Hyperparams {
        lambda: 0.01,
        gamma: 0.2,
        ..Hyperparams::default()
    }
}

#[cfg(feature = "parallel")]
fn thread_budgets() -> Vec<usize> {
    let max = std::thread::available_parallelism().map_or(4, |n| n.get());
    let mut budgets = vec![1, 2, max];
    budgets.sort_unstable();
    budgets.dedup();
    budgets
}

/// Run `f` under a rayon pool of the given size.
#[cfg(feature = "parallel")]
fn with_threads<T>(threads: usize, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("pool builds")
        .install(f)
}

fn bench_coefficient_pass(c: &mut Criterion) {
    let data = bench_data();
    let hp = hp();
    let (weights, _) = build_locality(&data.semantic, LocalityMode::None).unwrap();
    let image = data.truth.image_prototypes.clone();

    let mut group = c.benchmark_group("coefficient_pass");
    group.sample_size(10);

    #[cfg(feature = "parallel")]
    for threads in thread_budgets() {
        group.bench_function(BenchmarkId::new("threads", threads), |b| {
            b.iter(|| {
                with_threads(threads, || {
                    a_step(
                        black_box(&data.semantic),
                        Some(black_box(&image)),
                        &weights,
                        &hp,
                        None,
                    )
                    .unwrap()
                })
            })
        });
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function(BenchmarkId::new("sequential", 1), |b| {
        b.iter(|| {
            a_step(
                black_box(&data.semantic),
                Some(black_box(&image)),
                &weights,
                &hp,
                None,
            )
            .unwrap()
        })
    });
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let data = bench_data();
    let hp = hp();
    let prototypes = compute_prototypes(&data.train).unwrap();

    let mut group = c.benchmark_group("fit");
    group.sample_size(10);

    #[cfg(feature = "parallel")]
    for threads in thread_budgets() {
        group.bench_function(BenchmarkId::new("threads", threads), |b| {
            b.iter(|| {
                with_threads(threads, || {
                    fit(black_box(&data.semantic), &prototypes.seen, &hp).unwrap()
                })
            })
        });
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function(BenchmarkId::new("sequential", 1), |b| {
        b.iter(|| fit(black_box(&data.semantic), &prototypes.seen, &hp).unwrap())
    });
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let data = bench_data();
    let hp = hp();
    let prototypes = compute_prototypes(&data.train).unwrap();
    let model = fit(&data.semantic, &prototypes.seen, &hp).unwrap();
    let space = model
        .image_space(&prototypes.seen, data.semantic.class_order())
        .unwrap();
    let options = EvalOptions::default();

    let mut group = c.benchmark_group("evaluate");
    group.sample_size(20);

    #[cfg(feature = "parallel")]
    for threads in thread_budgets() {
        group.bench_function(BenchmarkId::new("threads", threads), |b| {
            b.iter(|| {
                with_threads(threads, || {
                    evaluate(black_box(&data.test), &space, Protocol::Gzsl, &options).unwrap()
                })
            })
        });
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function(BenchmarkId::new("sequential", 1), |b| {
        b.iter(|| evaluate(black_box(&data.test), &space, Protocol::Gzsl, &options).unwrap())
    });
    group.finish();
}

fn bench_kmeans_restarts(c: &mut Criterion) {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let points = ndarray::Array2::<f64>::from_shape_fn((200, 8), |_| rng.random_range(-1.0..1.0));

    let mut group = c.benchmark_group("kmeans_restarts");
    group.sample_size(20);

    #[cfg(feature = "parallel")]
    for threads in thread_budgets() {
        group.bench_function(BenchmarkId::new("threads", threads), |b| {
            b.iter(|| with_threads(threads, || kmeans(black_box(&points), 8, 3, 32).unwrap()))
        });
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function(BenchmarkId::new("sequential", 1), |b| {
        b.iter(|| kmeans(black_box(&points), 8, 3, 32).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_coefficient_pass,
    bench_fit,
    bench_evaluate,
    bench_kmeans_restarts
);
criterion_main!(benches);
