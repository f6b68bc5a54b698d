//! Seeded fixtures shared by the criterion benches.

use gvtcnn_core::datagen::{make_dataset, Dataset, DatasetOptions};
use gvtcnn_core::synth::synthetic_corpus;
use gvtcnn_core::{ConvLayer, Tensor, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor::from_vec(shape, data).expect("shape matches data")
}

pub fn random_layer(out_ch: usize, in_ch: usize, seed: u64) -> ConvLayer<f32> {
    let mut layer = ConvLayer::zeros(out_ch, in_ch, Some(0.25)).expect("valid layer");
    layer.weights = random_tensor([out_ch, in_ch, 3, 3], seed);
    layer.bias = random_tensor([1, 1, 1, out_ch], seed + 1).data().to_vec();
    layer
}

/// A small H dataset: `images` synthetic 96×96 images, stride 16.
pub fn small_dataset(images: usize, seed: u64) -> Dataset {
    let corpus = synthetic_corpus(96, 96, images, seed);
    make_dataset(&corpus, &DatasetOptions::new(Variant::H, 37, seed)).expect("dataset")
}
