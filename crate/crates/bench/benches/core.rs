use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use handover_bench as fx;
use handover_core::clustering::{kmeans, select_h, KMeansOptions};
use handover_core::nn::{bptt_gradients, forward, RecurrentState};
use handover_core::params::ParameterServer;
use handover_core::rng::rng_from_seed;
use handover_core::RmsPropConfig;

fn network(c: &mut Criterion) {
    let w = fx::weights(1);
    let seg = fx::segment(1);
    let state = seg.steps[0].state.clone();
    let rs = RecurrentState::zeros(8);
    c.bench_function("forward", |b| b.iter(|| forward(black_box(&w), &state, &rs).unwrap()));
    c.bench_function("bptt_20", |b| b.iter(|| bptt_gradients(black_box(&w), &seg, 0.95, 0.01).unwrap()));
}

fn worker(c: &mut Criterion) {
    let w = fx::weights(2);
    c.bench_function("segment_compute", |b| {
        b.iter_batched(|| fx::worker(2), |mut wk| wk.compute_segment(&w).unwrap(), BatchSize::SmallInput)
    });
    let server = ParameterServer::new(w.clone(), RmsPropConfig::default());
    let grad = fx::worker(2).compute_segment(&w).unwrap().grad;
    c.bench_function("server_fetch", |b| b.iter(|| server.fetch()));
    c.bench_function("server_push", |b| b.iter(|| server.push(black_box(&grad), 0, 20).unwrap()));
}

fn environment(c: &mut Criterion) {
    let mut env = fx::env(3);
    let mut rng = rng_from_seed(3);
    let mut t = 0;
    c.bench_function("env_step", |b| {
        b.iter(|| {
            t += 1;
            let out = env.step(t % 6, &mut rng).unwrap();
            if out.done {
                env.reset(&mut rng).unwrap();
            }
            out.reward
        })
    });
}

fn clustering(c: &mut Criterion) {
    let features = fx::features(12, 100, 4);
    c.bench_function("kmeans_12x100_h3", |b| {
        let mut rng = rng_from_seed(4);
        b.iter(|| kmeans(black_box(&features), 3, 0.5, 300, &mut rng).unwrap())
    });
    c.bench_function("select_h_12x100", |b| {
        let mut rng = rng_from_seed(5);
        b.iter(|| select_h(black_box(&features), 5, 0.5, KMeansOptions::default(), &mut rng).unwrap())
    });
}

criterion_group!(benches, network, worker, environment, clustering);
criterion_main!(benches);
