#![allow(dead_code)]

use gando::advtrain::{train_baseline, TrainConfig, TrainMode, TrainingData};
use gando::synthkit::{BoxLabel, ShapeClass};
use gando::tinyssd::{encode_targets, loss_gradients, LossConfig};
use gando::{BoxCoords, Image};
use rand::Rng as _;
use gando::synthkit::{generate_dataset, DatasetManifest, SceneSpec, SplitCounts};
use gando::tinyssd::{ArchConfig, Checkpoint, DetectorParams};

pub fn tiny_scene() -> SceneSpec {
    SceneSpec {
        image_size: 32,
        num_objects: 2,
        min_object_side: 8,
        max_object_side: 16,
        ..SceneSpec::default()
    }
}

pub fn tiny_arch() -> ArchConfig {
    ArchConfig {
        image_size: 32,
        channels: [4, 4, 8, 8],
        aspect_ratios: vec![1.0],
        ..ArchConfig::default()
    }
}

pub fn tiny_manifest(seed: u64) -> DatasetManifest {
    generate_dataset(&tiny_scene(), SplitCounts { train: 16, val: 4, test: 8 }, seed).unwrap()
}

pub fn tiny_data(seed: u64) -> TrainingData {
    TrainingData::from_manifest(&tiny_manifest(seed), &tiny_arch().anchors(), 0.5).unwrap()
}

pub fn tiny_config(mode: TrainMode, epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        lr_d: 1e-3,
        batch_size: 4,
        max_epochs: epochs,
        seed: 5,
        ..TrainConfig::for_mode(mode)
    }
}

/// A briefly trained baseline on the tiny data.
pub fn tiny_baseline(data: &TrainingData) -> Checkpoint {
    let init = DetectorParams::init(&tiny_arch(), 11).unwrap();
    train_baseline(&tiny_config(TrainMode::Baseline, 3), init, data).unwrap().checkpoint
}

pub fn bits(p: &DetectorParams<f32>) -> Vec<u32> {
    p.iter_values().map(|v| v.to_bits()).collect()
}

pub fn grad_arch() -> ArchConfig {
    ArchConfig {
        image_size: 16,
        channels: [2, 2, 2, 2],
        aspect_ratios: vec![1.0],
        anchor_scales: [0.4, 0.7],
        ..ArchConfig::default()
    }
}

pub fn random_image(seed: u64) -> Image {
    let mut rng = gando::rng::rng_from(seed);
    let data = (0..16 * 16 * 3).map(|_| rng.random::<f32>()).collect();
    Image::from_vec(16, 16, 3, data).unwrap()
}

/// A detector with at most 500 parameters, three images (one without
/// objects) and their encoded targets, in f64 for finite differences.
pub fn grad_fixture() -> (DetectorParams<f64>, Vec<Image>, Vec<gando::tinyssd::EncodedTargets>) {
    let arch = grad_arch();
    let params = DetectorParams::<f64>::init(&arch, 3).unwrap();
    assert!(params.num_params() <= 500, "{} params", params.num_params());
    let anchors = arch.anchors();
    let gts = [
        vec![BoxLabel {
            class_id: ShapeClass::Circle as usize,
            bbox: BoxCoords::new(0.3, 0.35, 0.4, 0.45),
        }],
        vec![
            BoxLabel {
                class_id: ShapeClass::Triangle as usize,
                bbox: BoxCoords::new(0.5, 0.5, 0.6, 0.55),
            },
            BoxLabel {
                class_id: ShapeClass::Square as usize,
                bbox: BoxCoords::new(0.75, 0.25, 0.3, 0.3),
            },
        ],
        vec![],
    ];
    let images = (0..3).map(|i| random_image(10 + i)).collect();
    let targets = gts.iter().map(|g| encode_targets(g, &anchors, 0.5)).collect();
    (params, images, targets)
}

pub fn grad_loss_at(params: &DetectorParams<f64>, images: &[Image], targets: &[gando::tinyssd::EncodedTargets]) -> f64 {
    let imgs: Vec<&Image> = images.iter().collect();
    let tg: Vec<_> = targets.iter().collect();
    loss_gradients(params, &imgs, &tg, &LossConfig::default(), None).unwrap().0.total
}

