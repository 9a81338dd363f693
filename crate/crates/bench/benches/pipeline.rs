use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use splatwalk_bench::fixture;
use splatwalk_core::io::{export_compressed, write_ply, CompressionLevel};
use splatwalk_core::optim::loss;
use splatwalk_core::raster::{backward, render};
use splatwalk_core::{Image, RenderConfig};

fn rasterize(c: &mut Criterion) {
    let mut group = c.benchmark_group("render");
    for &n in &[500usize, 5_000] {
        let (cloud, view) = fixture(n, 256);
        group.throughput(Throughput::Elements(n as u64));
        for parallel in [false, true] {
            let cfg = RenderConfig::<f32> {
                parallel,
                ..Default::default()
            };
            let label = if parallel { "parallel" } else { "sequential" };
            group.bench_with_input(BenchmarkId::new(label, n), &cloud, |b, cloud| {
                b.iter(|| render(black_box(cloud), &view.camera, &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let mut group = c.benchmark_group("backward");
    for &n in &[500usize, 5_000] {
        let (cloud, view) = fixture(n, 256);
        let cfg = RenderConfig::<f32>::default();
        let out = render(&cloud, &view.camera, &cfg).unwrap();
        // Compare against a shifted image so every pixel carries gradient.
        let mut target = view.image.clone();
        target.data.iter_mut().for_each(|v| *v = (*v + 0.1).min(1.0));
        let l = loss(&out.color, &target, 0.2).unwrap();
        let d_color: Image<f32> = l.grad;
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &cloud, |b, cloud| {
            b.iter(|| backward(black_box(cloud), &view.camera, &cfg, &out, &d_color).unwrap())
        });
    }
    group.finish();
}

fn exporters(c: &mut Criterion) {
    let (cloud, _) = fixture(20_000, 16);
    let mut group = c.benchmark_group("export");
    group.throughput(Throughput::Elements(cloud.len() as u64));
    group.bench_function("ply", |b| {
        b.iter(|| {
            let mut buf = Vec::with_capacity(cloud.len() * 256);
            write_ply(black_box(&cloud), &mut buf).unwrap();
            buf
        })
    });
    for level in CompressionLevel::ALL {
        group.bench_function(level.name(), |b| {
            b.iter(|| export_compressed(black_box(&cloud), level).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, rasterize, gradients, exporters);
criterion_main!(benches);
