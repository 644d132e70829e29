use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use indefsl_core::bc_algebra::{real_row, validate_triple};
use indefsl_core::coefficients::check_condition_at;
use indefsl_core::kernel_ops::build_W0;
use indefsl_core::riesz_diag::{gram_analysis, section_order};
use indefsl_core::spectral::{char_det, find_eigenvalues, root_subspace, Region};
use indefsl_core::{BoundaryTriple, CoefficientModel, Grid, Point, Rule, C64};

fn triple() -> BoundaryTriple {
    validate_triple(real_row([1.0, 0.0, 0.0, 0.0]), real_row([0.0, 0.0, 0.0, 1.0]), real_row([0.0, 1.0, 0.0, 0.0]), 1e-10).unwrap()
}

fn shooting(c: &mut Criterion) {
    let m = CoefficientModel::sign_weight();
    let t = triple();
    c.bench_function("char_det sgn x, lambda = 150+7i", |b| b.iter(|| char_det(&m, &t, black_box(C64::new(150.0, 7.0)))));
    let mut g = c.benchmark_group("search");
    g.sample_size(10);
    g.bench_function("find_eigenvalues sgn x, 32 eigenvalues", |b| {
        b.iter(|| find_eigenvalues(&m, &t, Region::default_for(&m, 32), 200).unwrap())
    });
    g.finish();
}

fn vectors_and_gram(c: &mut Criterion) {
    let m = CoefficientModel::sign_weight();
    let t = triple();
    let ev = find_eigenvalues(&m, &t, Region::default_for(&m, 32), 200).unwrap();
    let grid = Grid::new(&m, 512, Rule::Boole);
    let mut g = c.benchmark_group("vectors");
    g.sample_size(10);
    g.bench_function("root_subspace x35, n = 512", |b| {
        b.iter(|| ev.iter().map(|&(z, k)| root_subspace(&m, &t, z, k, &grid).unwrap()).count())
    });
    let data: Vec<_> = ev.iter().map(|&(z, k)| root_subspace(&m, &t, z, k, &grid).unwrap()).collect();
    let vecs = section_order(&data);
    g.bench_function("gram_analysis n <= 30", |b| b.iter(|| gram_analysis(&vecs, &t, &[5, 10, 15, 20, 25, 30]).unwrap()));
    g.finish();
}

fn operators(c: &mut Criterion) {
    let m = CoefficientModel::power_weight(1.0);
    let conn = check_condition_at(&m, Point::Zero).connection.unwrap();
    let grid = Grid::new(&m, 128, Rule::Open);
    let mut g = c.benchmark_group("operators");
    g.sample_size(10);
    g.bench_function("build_W0 n = 128", |b| b.iter(|| build_W0(&grid, &conn).unwrap()));
    g.finish();
}

criterion_group!(benches, shooting, vectors_and_gram, operators);
criterion_main!(benches);
