//! Data-parallel core against the sequential path.
//!
//! With the default `parallel` feature every workload runs on a one-thread
//! rayon pool and on the full pool. Building with `--no-default-features`
//! runs the same workloads through the sequential fallback under the id
//! `sequential`, so the two reports can be compared directly.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rbig::detectors::{KernelConfig, KernelKind, KernelModel};
use rbig::evaluation::bootstrap_auc;
use rbig::{toy, Detector, DetectorKind, FitOptions, GaussianizationModel, RbigConfig, RngState};

type Runner = Box<dyn Fn(&mut (dyn FnMut() + Send))>;

fn variants() -> Vec<(String, Runner)> {
    #[cfg(feature = "parallel")]
    {
        let mut sizes = vec![1, rayon::current_num_threads()];
        sizes.dedup();
        sizes
            .into_iter()
            .map(|threads| {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .unwrap();
                let run: Runner = Box::new(move |f| pool.install(f));
                (format!("rayon/{threads}"), run)
            })
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let run: Runner = Box::new(|f| f());
        vec![("sequential".to_owned(), run)]
    }
}

fn workloads(c: &mut Criterion) {
    let ring = toy::ring(20_000, 0.01, &mut RngState::new(1)).unwrap();
    let cfg = RbigConfig {
        max_layers: 20,
        tol_negentropy: 0.0,
        ..RbigConfig::default()
    };
    let model = GaussianizationModel::fit(&ring.x, &cfg).unwrap();
    let kde = KernelModel::fit(&ring.x, KernelKind::Kde, &KernelConfig::default()).unwrap();
    let scores = Detector::fit(&ring.x, &FitOptions::new(DetectorKind::Rbig))
        .unwrap()
        .score(&ring.x)
        .unwrap()
        .scores;

    let mut group = c.benchmark_group("rbig");
    group.sample_size(10);
    for (id, run) in variants() {
        group.bench_function(BenchmarkId::new("fit_20_layers", &id), |b| {
            b.iter(|| {
                run(&mut || {
                    black_box(GaussianizationModel::fit(&ring.x, &cfg).unwrap());
                })
            })
        });
        group.bench_function(BenchmarkId::new("log_density", &id), |b| {
            b.iter(|| {
                run(&mut || {
                    black_box(model.log_density(&ring.x).unwrap());
                })
            })
        });
        group.bench_function(BenchmarkId::new("kde_score", &id), |b| {
            b.iter(|| {
                run(&mut || {
                    black_box(kde.score_kde(&ring.x).unwrap());
                })
            })
        });
        group.bench_function(BenchmarkId::new("bootstrap_200", &id), |b| {
            b.iter(|| {
                run(&mut || {
                    black_box(bootstrap_auc(&scores, &ring.labels, 200, 7).unwrap());
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, workloads);
criterion_main!(benches);
