use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use quadham_core::poisson::{jacobi_residual_bruteforce, jacobi_residual_uv, BRUTE_FORCE_STEP};
use quadham_core::sampling::Sampler;
use quadham_core::systems::system;
use quadham_core::verify::{verify_system, VerifyOptions};

fn jacobi(c: &mut Criterion) {
    let sys = system("shivamoggi", &[]).unwrap();
    let p = &sys.tri.as_ref().unwrap().structures[0];
    let mf = p.matrix_field();
    let states = Sampler::new(0).states(&sys.region, 64, |s| sys.accepts(s)).unwrap();
    c.bench_function("jacobi_uv/shivamoggi_N1", |b| {
        b.iter(|| {
            for s in &states {
                black_box(jacobi_residual_uv(p, s).unwrap());
            }
        })
    });
    c.bench_function("jacobi_bruteforce/shivamoggi_N1", |b| {
        b.iter(|| {
            for s in &states {
                black_box(jacobi_residual_bruteforce(&mf, s, BRUTE_FORCE_STEP).unwrap());
            }
        })
    });
}

fn suite(c: &mut Criterion) {
    let opts = VerifyOptions {
        samples: 100,
        ..Default::default()
    };
    let mut g = c.benchmark_group("verify");
    g.sample_size(10);
    for name in ["shivamoggi", "raychaudhuri", "lorenz_conservative"] {
        g.bench_function(name, |b| b.iter(|| black_box(verify_system(name, &[], &opts).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, jacobi, suite);
criterion_main!(benches);
