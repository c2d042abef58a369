use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mwu_lab::{build_q, find_fixed_points, map_h, step_exponential, step_linear};
use mwu_lab_bench::{builtin_fixture, random_fixture};

fn bench_steppers(c: &mut Criterion) {
    let (game, profile, rates) = builtin_fixture();
    c.bench_function("step_linear/builtin", |b| {
        b.iter(|| step_linear(&game, black_box(&profile), &rates).unwrap())
    });
    c.bench_function("step_exponential/builtin", |b| {
        b.iter(|| step_exponential(&game, black_box(&profile), &rates).unwrap())
    });
    let (game, profile, rates) = random_fixture();
    c.bench_function("step_linear/random_4x5", |b| {
        b.iter(|| step_linear(&game, black_box(&profile), &rates).unwrap())
    });
}

fn bench_polynomial(c: &mut Criterion) {
    let (game, profile, rates) = random_fixture();
    c.bench_function("build_q/random_4x5", |b| {
        b.iter(|| build_q(&game, black_box(&rates)).unwrap())
    });
    let q = build_q(&game, &rates).unwrap();
    let x: Vec<Vec<f64>> = profile.rows().to_vec();
    c.bench_function("baum_eagon_step/random_4x5", |b| {
        b.iter(|| q.baum_eagon_step(black_box(&x)).unwrap())
    });
}

fn bench_onedim(c: &mut Criterion) {
    let h = map_h();
    c.bench_function("map_h/iterate_1000", |b| {
        b.iter(|| mwu_lab::iterate(&h, black_box(0.3), 1000))
    });
    c.bench_function("find_fixed_points/h_k2", |b| {
        b.iter(|| find_fixed_points(&h, 2).unwrap())
    });
}

criterion_group!(benches, bench_steppers, bench_polynomial, bench_onedim);
criterion_main!(benches);
