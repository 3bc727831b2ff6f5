use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use quadham_core::dynamics::{integrate, lyapunov_spectrum, IntegratorConfig};
use quadham_core::systems::system;

fn integrators(c: &mut Criterion) {
    let sys = system("lu_autonomous", &[]).unwrap();
    let mut g = c.benchmark_group("integrate/lu_autonomous_t10");
    g.bench_function("rk4_dt1e-3", |b| {
        let cfg = IntegratorConfig::rk4(1e-3, 10.0).with_record_every(usize::MAX);
        b.iter(|| black_box(integrate(&sys.field, &sys.default_state, &cfg).unwrap()))
    });
    g.bench_function("rk45_rtol1e-10", |b| {
        let cfg = IntegratorConfig::rk45(1e-10, 1e-12, 10.0).with_record_every(usize::MAX);
        b.iter(|| black_box(integrate(&sys.field, &sys.default_state, &cfg).unwrap()))
    });
    g.finish();
}

fn lyapunov(c: &mut Criterion) {
    let sys = system("qi_special", &[]).unwrap();
    let cfg = IntegratorConfig::rk4(0.01, 100.0);
    let mut g = c.benchmark_group("lyapunov");
    g.sample_size(10);
    g.bench_function("qi_special_T100", |b| {
        b.iter(|| black_box(lyapunov_spectrum(&sys.field, &sys.default_state, &cfg, 1.0, 0).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, integrators, lyapunov);
criterion_main!(benches);
