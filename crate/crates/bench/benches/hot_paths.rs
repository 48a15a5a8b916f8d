use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use tm_lab::interval::{build_w, conformal_measure};
use tm_lab::language::Language;
use tm_lab::potential::{Perturbation, Potential};
use tm_lab::thermo::{pressure_root, return_coefficients, ReturnSystem};
use tm_lab::word::Word;

fn bench_language_build(c: &mut Criterion) {
    c.bench_function("language_build_24", |b| {
        b.iter(|| Language::build(24).unwrap())
    });
}

fn bench_return_coefficients(c: &mut Criterion) {
    let rs = ReturnSystem::build(&Word::parse("000").unwrap(), 64).unwrap();
    let v = Potential::DistancePower {
        a: 0.5,
        perturbation: Perturbation::Zero,
    };
    c.bench_function("return_coefficients_nmax64", |b| {
        b.iter(|| return_coefficients(&rs, &v, 1.0).unwrap())
    });
    let coeffs = return_coefficients(&rs, &v, 1.0).unwrap();
    c.bench_function("pressure_root_nmax64", |b| {
        b.iter_batched(
            || coeffs.clone(),
            |cs| pressure_root(&cs),
            BatchSize::SmallInput,
        )
    });
}

fn bench_conformal_measure(c: &mut Criterion) {
    let w = build_w(0.5, 12).unwrap();
    c.bench_function("conformal_measure_depth12", |b| {
        b.iter(|| conformal_measure(&w, 1.0, 200_000).unwrap())
    });
}

criterion_group!(
    benches,
    bench_language_build,
    bench_return_coefficients,
    bench_conformal_measure
);
criterion_main!(benches);
