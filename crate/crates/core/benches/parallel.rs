//! Parallel vs sequential throughput of the batch-level entry points.
//! The parallel path needs the default `parallel` feature; without it the
//! two variants coincide.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cvhom::catalog::{CatalogOptions, DefectCatalog};
use cvhom::cv::{attach_surrogates, draw_batch};
use cvhom::field::MaterialModel;
use cvhom::solver::SolverOptions;

fn bench_batch(c: &mut Criterion) {
    let model = MaterialModel::checkerboard(2, 3.0, 23.0, 0.5).unwrap();
    let mut group = c.benchmark_group("draw_batch_n6_r2_m16");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &par| {
            b.iter(|| {
                draw_batch(&model, 6, 2, 16, 42, &SolverOptions::default(), par).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_catalog(c: &mut Criterion) {
    let model = MaterialModel::checkerboard(2, 3.0, 23.0, 0.5).unwrap();
    let mut group = c.benchmark_group("catalog_exact_n6_r2");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &par| {
            let opts = CatalogOptions { parallel: par, ..Default::default() };
            b.iter(|| DefectCatalog::build_exact(&model, 6, 2, &opts).unwrap())
        });
    }
    group.finish();
}

fn bench_surrogates(c: &mut Criterion) {
    let model = MaterialModel::checkerboard(2, 3.0, 23.0, 0.5).unwrap();
    let opts = CatalogOptions::default();
    let catalog = DefectCatalog::build_exact(&model, 12, 2, &opts).unwrap();
    let batch = draw_batch(&model, 12, 2, 24, 7, &SolverOptions::default(), true).unwrap();
    let mut group = c.benchmark_group("attach_surrogates_n12_m24");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &par| {
            b.iter(|| {
                let mut batch = batch.clone();
                attach_surrogates(&mut batch, &catalog, par).unwrap();
                batch
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_batch, bench_catalog, bench_surrogates);
criterion_main!(benches);
