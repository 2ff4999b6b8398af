use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ebm_bench::{image_potential, noise_batch, toy_potential};
use ebm_core::numerics::grad_wrt_params;
use ebm_core::sampler::run_chain;
use ebm_core::toy::{grid_normalize, kde, Bounds, ToyDensity};
use ebm_core::{rng, Energy, InitMode, SamplerConfig};

fn potentials(c: &mut Criterion) {
    let toy = toy_potential();
    let xs = noise_batch(&toy, 100, 1);
    c.bench_function("mlp input grad x100", |b| {
        b.iter(|| {
            for i in 0..xs.batch_len() {
                black_box(toy.grad_wrt_input(&xs.sample_tensor(i)).unwrap());
            }
        })
    });
    c.bench_function("mlp param grad x100", |b| b.iter(|| black_box(grad_wrt_params(&toy, &xs).unwrap())));

    let img = image_potential(28);
    let x = noise_batch(&img, 1, 2).sample_tensor(0);
    c.bench_function("convnet energy 28x28", |b| b.iter(|| black_box(img.energy(&x).unwrap())));
    c.bench_function("convnet input grad 28x28", |b| b.iter(|| black_box(img.grad_wrt_input(&x).unwrap())));
}

fn sampler(c: &mut Criterion) {
    let toy = toy_potential();
    let x0 = noise_batch(&toy, 100, 3);
    let cfg = SamplerConfig {
        epsilon: 0.01,
        steps: 100,
        tau: 1,
        mh: false,
        init: InitMode::Noise,
    };
    c.bench_function("langevin 100 chains x 100 steps (toy)", |b| {
        b.iter(|| black_box(run_chain(&x0, &toy, &cfg, &mut rng::seeded(4)).unwrap()))
    });
    let mh = SamplerConfig { mh: true, ..cfg };
    c.bench_function("mala 100 chains x 100 steps (toy)", |b| {
        b.iter(|| black_box(run_chain(&x0, &toy, &mh, &mut rng::seeded(4)).unwrap()))
    });
}

fn densities(c: &mut Criterion) {
    let truth = ToyDensity::three_modes();
    let pts = noise_batch(&toy_potential(), 10_000, 5);
    c.bench_function("kde 10k points on 200x200", |b| {
        b.iter(|| black_box(kde(&pts, 0.05, Bounds::default(), 200).unwrap()))
    });
    c.bench_function("grid normalize 200x200", |b| {
        b.iter(|| black_box(grid_normalize(&truth, Bounds::default(), 200).unwrap()))
    });
}

criterion_group!(benches, potentials, sampler, densities);
criterion_main!(benches);
