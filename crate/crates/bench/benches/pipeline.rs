use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use gvtcnn_bench::small_dataset;
use gvtcnn_core::gvtcnn::{batch_tensors, build_model, infer_plane, Trainer};
use gvtcnn_core::hevc::interpolate_all;
use gvtcnn_core::mcsim::{block_grid, full_search_integer};
use gvtcnn_core::synth::{synthetic_plane, synthetic_sequence};
use gvtcnn_core::{GvtcnnConfig, GvtcnnModel, TrainConfig, Variant};
use std::hint::black_box;

fn dctif(c: &mut Criterion) {
    let plane = synthetic_plane(256, 256, 4);
    let mut group = c.benchmark_group("dctif");
    group.throughput(Throughput::Elements((256 * 256 * 15) as u64));
    group.bench_function("interpolate_all_256", |b| b.iter(|| interpolate_all(black_box(&plane)).unwrap()));
    group.finish();
}

fn inference(c: &mut Criterion) {
    let plane = synthetic_plane(128, 128, 5);
    let mut group = c.benchmark_group("infer_plane");
    group.sample_size(10);
    for variant in [Variant::H, Variant::Q] {
        let model: GvtcnnModel = build_model(&GvtcnnConfig::new(variant, 37), 1).unwrap();
        group.bench_function(format!("{variant}_128"), |b| b.iter(|| infer_plane(&model, black_box(&plane)).unwrap()));
    }
    group.finish();
}

fn motion_search(c: &mut Criterion) {
    let frames = synthetic_sequence(128, 128, 2, (1.25, -0.5), 6);
    let blocks = block_grid(128, 128, 16);
    c.bench_function("full_search_integer_r16_64blocks", |b| {
        b.iter(|| {
            for blk in &blocks {
                black_box(full_search_integer(&frames[1], blk, &frames[0], (0, 0), 16).unwrap());
            }
        })
    });
}

fn train_step(c: &mut Criterion) {
    let dataset = small_dataset(2, 7);
    let indices: Vec<usize> = (0..dataset.len().min(32)).collect();
    let (input, targets) = batch_tensors::<f32>(&dataset, &indices).unwrap();
    let model: GvtcnnModel = build_model(&GvtcnnConfig::new(Variant::H, 37), 1).unwrap();
    let mut trainer = Trainer::new(model, TrainConfig::scaled(1_000_000, 32, 1e-4, 0)).unwrap();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function(format!("h_step_batch{}", indices.len()), |b| {
        b.iter(|| trainer.step(black_box(&input), &targets).unwrap())
    });
    group.finish();
}

criterion_group!(benches, dctif, inference, motion_search, train_step);
criterion_main!(benches);
