//! Small dataset and model shared by the examples, so each one runs in
//! about a minute on one core.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hipnet::model::{HipnetModel, ModelConfig};
use hipnet::pipeline::train_on_dataset;
use hipnet::synthdata::{make_dataset, Dataset, DatasetConfig};
use hipnet::training::TrainConfig;
use hipnet::Result;

pub fn small_model() -> ModelConfig {
    ModelConfig {
        hidden: 48,
        depth: 4,
        skip_at: 2,
        encoder_hidden: 32,
        d_phi: 16,
        d_beta: 8,
        ..ModelConfig::default()
    }
}

/// Working directory from the first argument, or a fixed temp path.
pub fn workdir(name: &str) -> PathBuf {
    std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("hipnet-{name}")))
}

pub fn small_dataset(dir: &Path) -> Result<Dataset> {
    let data = dir.join("data");
    if !data.join("manifest.json").exists() {
        let config = DatasetConfig {
            subjects: 2,
            sequences: 4,
            frames: 6,
            points: 2000,
            seed: 3,
            neighbors: 8,
        };
        make_dataset(&config, &data)?;
    }
    Dataset::open(&data)
}

/// Dataset plus a model trained on it (reused when already on disk).
pub fn trained(dir: &Path) -> Result<(Dataset, HipnetModel, Vec<usize>)> {
    let ds = small_dataset(dir)?;
    let run = dir.join("run");
    if !run.join("model.hipw").exists() {
        let config = TrainConfig {
            surface_points: 500,
            eikonal_points: 500,
            lr: 2e-3,
            epochs: 6,
            model: small_model(),
            ..TrainConfig::default()
        };
        println!("training a small model into {}", run.display());
        train_on_dataset(&ds, &config, &run, None, None, None, |r| {
            if r.step % 12 == 0 {
                println!("  step {:3}  loss {:.4}", r.step, r.loss.total);
            }
        })?;
    }
    let (model, ids) = HipnetModel::load(&run.join("model.hipw"), &ds.skeleton)?;
    Ok((ds, model, ids))
}
