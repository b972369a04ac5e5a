use criterion::{black_box, criterion_group, criterion_main, Criterion};
use qls_core::criterion::{vk_slope_branch_fd, vk_slope_integral};
use qls_core::evolution::{step, EvolutionConfig, Scheme};
use qls_core::functionals::{energy, momentum_untwisted};
use qls_core::model::{builtin_model, BuiltinCase};
use qls_core::profile::{default_grid, gray_profile, kink_profile};

fn profiles(c: &mut Criterion) {
    let m = builtin_model(BuiltinCase::Sf3, 1.0, 1.0).unwrap();
    let (x, n) = default_grid(&m, 0.0).unwrap();
    c.bench_function("kink_profile SF3 n=4096", |b| {
        b.iter(|| kink_profile(black_box(&m), x, n).unwrap())
    });
    let (x, n) = default_grid(&m, 0.3).unwrap();
    c.bench_function("gray_profile SF3 c=0.3", |b| {
        b.iter(|| gray_profile(black_box(&m), 0.3, x, n).unwrap())
    });
}

fn slopes(c: &mut Criterion) {
    let m = builtin_model(BuiltinCase::Gp2, 1.0, 0.5).unwrap();
    c.bench_function("vk_slope_integral GP2", |b| {
        b.iter(|| vk_slope_integral(black_box(&m)).unwrap())
    });
    c.bench_function("vk_slope_branch_fd GP2", |b| {
        b.iter(|| vk_slope_branch_fd(black_box(&m), 0.05).unwrap())
    });
}

fn functionals(c: &mut Criterion) {
    let m = builtin_model(BuiltinCase::Gp1, 1.0, 1.0).unwrap();
    let (x, n) = default_grid(&m, 0.0).unwrap();
    let f = kink_profile(&m, x, n).unwrap().field();
    c.bench_function("energy n=4096", |b| b.iter(|| energy(black_box(&f), &m)));
    c.bench_function("momentum_untwisted n=4096", |b| {
        b.iter(|| momentum_untwisted(black_box(&f)).unwrap())
    });
}

fn stepping(c: &mut Criterion) {
    let m = builtin_model(BuiltinCase::Gp1, 1.0, 1.0).unwrap();
    let (x, n) = default_grid(&m, 0.5).unwrap();
    let f = gray_profile(&m, 0.5, x, n).unwrap().field();
    for scheme in [Scheme::CrankNicolsonFixedPoint, Scheme::StrangSplit] {
        let cfg = EvolutionConfig {
            scheme,
            ..EvolutionConfig::default()
        };
        c.bench_function(&format!("step {scheme:?} n=4096"), |b| {
            b.iter(|| step(black_box(&f), &m, &cfg).unwrap())
        });
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = profiles, slopes, functionals, stepping
}
criterion_main!(benches);
