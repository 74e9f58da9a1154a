// cargo bench -p rmtnet-bench

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rmtnet::grf::{sample_grf_model, GrfBounds};
use rmtnet::mesh::{build_mesh, default_stations, MeshConfig, ResistivityModel};
use rmtnet::nn::{Tensor4, UNet, UNetConfig};
use rmtnet::physics::{forward_response, FrequencySet};

fn forward(c: &mut Criterion) {
    let mesh = build_mesh(&MeshConfig::default()).unwrap();
    let model = ResistivityModel::uniform(&mesh, 100.0).unwrap();
    let freqs = FrequencySet::default();
    let stations = default_stations();
    let mut g = c.benchmark_group("forward");
    g.sample_size(10);
    g.bench_function("half-space 13 freqs x 21 stations", |b| {
        b.iter(|| forward_response(black_box(&model), &mesh, &freqs, &stations).unwrap())
    });
    g.finish();
}

fn grf(c: &mut Criterion) {
    let mesh = build_mesh(&MeshConfig::default()).unwrap();
    let bounds = GrfBounds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("grf model draw", |b| {
        b.iter(|| sample_grf_model(&bounds, &mesh, &mut rng).unwrap())
    });
}

fn unet(c: &mut Criterion) {
    let net = UNet::new(UNetConfig::compact(), 0).unwrap();
    let s = net.config.input_size;
    let x = Tensor4::from_fn([8, 4, s, s], |[n, c, i, j]| ((n + c + i * 3 + j) % 7) as f64 / 7.0);
    let mut g = c.benchmark_group("unet compact");
    g.bench_function("infer batch 8", |b| b.iter(|| net.infer(black_box(&x)).unwrap()));
    g.bench_function("forward+backward batch 8", |b| {
        let mut net = net.clone();
        b.iter(|| {
            let y = net.forward(black_box(&x)).unwrap();
            net.zero_grad();
            net.backward(&y).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, forward, grf, unet);
criterion_main!(benches);
