use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cyclofield_bench::singular_density;
use cyclofield_core::covariance::{covariance_bn, functional_bn};
use cyclofield_core::limits::{finite_r_cov, limit_cov};
use cyclofield_core::sim::empirical_cov;
use cyclofield_core::specfun::{bessel_j, cosint, sinint};
use cyclofield_core::spectral::example1;
use cyclofield_core::weights::{bessel_kernel, invert_to_weight};
use cyclofield_core::{HarmonicFieldSampler, NormalizedFunctionalSpec, QuadratureSpec};

fn special_functions(c: &mut Criterion) {
    let xs: Vec<f64> = (1..=256).map(|k| 0.2 * k as f64).collect();
    c.bench_function("bessel_j/1.5 x256", |b| {
        b.iter(|| {
            xs.iter()
                .map(|&x| bessel_j(1.5, black_box(x)).unwrap())
                .sum::<f64>()
        })
    });
    c.bench_function("sinint+cosint x256", |b| {
        b.iter(|| {
            xs.iter()
                .map(|&x| sinint(black_box(x)).unwrap() + cosint(black_box(x)).unwrap())
                .sum::<f64>()
        })
    });
}

fn functionals(c: &mut Criterion) {
    let d = example1(1.0).unwrap();
    let spec = QuadratureSpec::default();
    let mut group = c.benchmark_group("functionals");
    for r in [1.0, 10.0, 50.0] {
        group.bench_with_input(BenchmarkId::new("B_3", r), &r, |b, &r| {
            b.iter(|| covariance_bn(&d, black_box(r), &spec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("b_3", r), &r, |b, &r| {
            b.iter(|| functional_bn(&d, black_box(r), &spec).unwrap())
        });
    }
    group.finish();
}

fn weights(c: &mut Criterion) {
    let kern = bessel_kernel(3, 1.0).unwrap();
    let spec = QuadratureSpec::default();
    c.bench_function("invert_to_weight n=3 r=10", |b| {
        b.iter(|| invert_to_weight(&kern, 10.0, black_box(4.0), &spec).unwrap())
    });
}

fn limits(c: &mut Criterion) {
    let spec = NormalizedFunctionalSpec::at_singularity(
        singular_density(3),
        bessel_kernel(3, 1.0).unwrap(),
        1,
        vec![0.25, 0.5, 1.0],
    )
    .unwrap();
    let quad = QuadratureSpec::default();
    let mut group = c.benchmark_group("limits");
    group.sample_size(10);
    group.bench_function("limit_cov", |b| b.iter(|| limit_cov(&spec, &quad).unwrap()));
    for r in [10.0, 1000.0] {
        group.bench_with_input(BenchmarkId::new("finite_r_cov", r), &r, |b, &r| {
            b.iter(|| finite_r_cov(&spec, black_box(r), &quad).unwrap())
        });
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let d = example1(1.0).unwrap();
    let quad = QuadratureSpec::default();
    let sampler = HarmonicFieldSampler::new(&d, 4096, &quad).unwrap();
    let mut seed = 0;
    c.bench_function("realization M=4096", |b| {
        b.iter(|| {
            seed += 1;
            sampler.realization(7, seed).evaluate(&[1.0, 0.0, 0.0])
        })
    });
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("empirical_cov M=4096 x200", |b| {
        b.iter(|| empirical_cov(&d, &[0.0, 1.0, 2.0, 5.0], 4096, 200, 1, &quad).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    special_functions,
    functionals,
    weights,
    limits,
    simulation
);
criterion_main!(benches);
