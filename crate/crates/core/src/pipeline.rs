//! End-to-end operations on datasets and checkpoints, shared by the command
//! line tool, the examples and the integration tests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HipError, Result};
use crate::evalmesh::{evaluate_frame, extract_mesh_banded, pose_bounds, EvalConfig, FrameMetrics, Mesh, MetricReport};
use crate::geom::P3;
use crate::model::HipnetModel;
use crate::seeds;
use crate::skeleton::{flatten, read_json, read_pose_stream, write_json, Pose, PoseVector};
use crate::synthdata::{Dataset, FrameRecord, FrameRef, Split};
use crate::training::trainer::{loss_csv_header, LOSS_FILE};
use crate::training::{load_state, save_state, write_loss_csv, LossRecord, TrainConfig, TrainState, Trainer};

/// `F(·, φ(pose), β)` as a batch function.
pub fn model_sdf<'a>(
    model: &'a HipnetModel,
    pose: &'a PoseVector,
    beta: &'a [f64],
) -> impl Fn(&[P3]) -> Result<Vec<f64>> + Copy + 'a {
    move |pts: &[P3]| model.eval_sdf(pts, pose, beta)
}

/// The code of training subject `s`, or an empty code for models without
/// subject conditioning.
pub fn subject_beta(model: &HipnetModel, s: usize) -> Result<Vec<f64>> {
    if model.codes_index().is_none() {
        return Ok(Vec::new());
    }
    model.code(s)
}

pub fn reconstruct(model: &HipnetModel, pose: &Pose, beta: &[f64], config: &EvalConfig) -> Result<Mesh> {
    let pv = flatten(pose);
    let mut mesh = extract_mesh_banded(model_sdf(model, &pv, beta), config.resolution, &pose_bounds(pose, config.pad), config.band_stride)?;
    mesh.cleanup();
    Ok(mesh)
}

fn frame_seed(config: &EvalConfig, r: &FrameRef) -> u64 {
    seeds::derive(config.seed, &[r.subject as u64, r.sequence as u64, r.frame as u64])
}

/// Every `stride`-th reference, starting from the first.
pub fn every_nth(refs: Vec<FrameRef>, stride: usize) -> Vec<FrameRef> {
    refs.into_iter().step_by(stride.max(1)).collect()
}

/// Scores `model` on the given frames against the analytic ground truth,
/// using each frame's own subject code (`code_for` may override it).
pub fn evaluate_model(
    model: &HipnetModel,
    ds: &Dataset,
    refs: &[FrameRef],
    config: &EvalConfig,
    code_for: impl Fn(usize) -> Result<Vec<f64>>,
) -> Result<MetricReport> {
    let mut frames: Vec<FrameMetrics> = Vec::with_capacity(refs.len());
    for r in refs {
        let rec = ds.load(r)?;
        let figure = ds.figures.get(r.subject).ok_or(HipError::UnknownSubject {
            id: r.subject,
            known: (0..ds.subject_count()).collect(),
        })?;
        let beta = code_for(r.subject)?;
        let pv = flatten(&rec.pose);
        frames.push(evaluate_frame(model_sdf(model, &pv, &beta), figure, &rec.pose, config, frame_seed(config, r))?);
    }
    MetricReport::aggregate(config.clone(), frames)
}

/// The analytic ground truth scored against itself.
pub fn evaluate_oracle(ds: &Dataset, refs: &[FrameRef], config: &EvalConfig) -> Result<MetricReport> {
    let mut frames = Vec::with_capacity(refs.len());
    for r in refs {
        let rec = ds.load(r)?;
        let posed = ds.figures[r.subject].posed(&rec.pose);
        let gt = |p: &[P3]| Ok(posed.sdf_batch(p));
        frames.push(evaluate_frame(gt, &ds.figures[r.subject], &rec.pose, config, frame_seed(config, r))?);
    }
    MetricReport::aggregate(config.clone(), frames)
}

pub const CONFIG_FILE: &str = "train_config.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub out: PathBuf,
    pub steps: usize,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub subject_ids: Vec<usize>,
}

/// Training frames of `ds`, optionally restricted to one subject.
pub fn training_frames(ds: &Dataset, subject: Option<usize>) -> Result<Vec<FrameRecord>> {
    if let Some(s) = subject {
        if s >= ds.subject_count() {
            return Err(HipError::UnknownSubject {
                id: s,
                known: (0..ds.subject_count()).collect(),
            });
        }
    }
    let refs: Vec<FrameRef> = ds
        .frames(Split::Train)
        .into_iter()
        .filter(|r| subject.is_none_or(|s| r.subject == s))
        .collect();
    ds.load_all(&refs)
}

/// Trains on the training split of `ds` and writes model, optimizer state,
/// progress and the loss CSV into `out`. With `resume`, training continues
/// from a directory written by an earlier call.
///
/// Models without subject codes are trained on `subject`'s frames only (or
/// every frame when `subject` is `None`).
pub fn train_on_dataset(
    ds: &Dataset,
    config: &TrainConfig,
    out: &Path,
    resume: Option<&Path>,
    subject: Option<usize>,
    max_steps: Option<usize>,
    mut log: impl FnMut(&LossRecord),
) -> Result<TrainSummary> {
    config.validate()?;
    let frames = training_frames(ds, subject)?;
    let subject_ids: Vec<usize> = match (config.model.d_beta, subject) {
        (0, Some(s)) => vec![s],
        (0, None) => Vec::new(),
        _ => (0..ds.subject_count()).collect(),
    };
    std::fs::create_dir_all(out).map_err(crate::error::io_err(out))?;
    let state = match resume {
        Some(dir) => {
            let saved: TrainConfig = read_json(&dir.join(CONFIG_FILE))?;
            if saved.model != config.model || saved.seed != config.seed {
                return Err(HipError::Input("resume config does not match the checkpoint".into()));
            }
            let (state, _) = load_state(dir, &ds.skeleton)?;
            if dir != out {
                if let Ok(csv) = std::fs::read(dir.join(LOSS_FILE)) {
                    crate::binio::write_atomic(&out.join(LOSS_FILE), &csv)?;
                }
            }
            state
        }
        None => TrainState::new(HipnetModel::new(&ds.skeleton, ds.subject_count(), config.model.clone(), config.seed)?),
    };
    write_json(&out.join(CONFIG_FILE), config)?;
    let joints = ds.skeleton.len();
    let mut trainer = Trainer::resume(state, &frames, config.clone())?;
    let mut pending: Vec<LossRecord> = Vec::new();
    let mut steps = 0usize;
    let mut last = None;
    while !trainer.finished() && max_steps.is_none_or(|m| steps < m) {
        let rec = match trainer.step() {
            Ok(r) => r,
            Err(e) => {
                // Keep the last good state on disk before giving up.
                save_state(out, trainer.state(), &subject_ids)?;
                write_loss_csv(&out.join(LOSS_FILE), joints, &pending)?;
                return Err(e);
            }
        };
        log(&rec);
        last = Some(rec.loss.total);
        pending.push(rec);
        steps += 1;
        let s = trainer.state();
        if config.checkpoint_every > 0 && s.step_in_epoch == 0 && s.epoch % config.checkpoint_every == 0 {
            save_state(out, s, &subject_ids)?;
            write_loss_csv(&out.join(LOSS_FILE), joints, &pending)?;
            pending.clear();
        }
    }
    save_state(out, trainer.state(), &subject_ids)?;
    if pending.is_empty() && !out.join(LOSS_FILE).exists() {
        crate::binio::write_atomic(&out.join(LOSS_FILE), format!("{}\n", loss_csv_header(joints)).as_bytes())?;
    } else if !pending.is_empty() {
        write_loss_csv(&out.join(LOSS_FILE), joints, &pending)?;
    }
    Ok(TrainSummary {
        out: out.to_path_buf(),
        steps,
        epochs: trainer.state().epoch,
        final_loss: last,
        subject_ids,
    })
}

/// Meshes of `target`'s body driven by the poses of `source`'s sequence.
pub fn retarget(
    model: &HipnetModel,
    ds: &Dataset,
    target: usize,
    source: usize,
    sequence: usize,
    config: &EvalConfig,
) -> Result<Vec<Mesh>> {
    let beta = subject_beta(model, target)?;
    let seq = ds.sequence(source, sequence).ok_or_else(|| {
        HipError::Input(format!("subject {source} has no sequence {sequence}"))
    })?;
    let poses = read_pose_stream(&ds.root.join(&seq.poses))?;
    poses.iter().map(|p| reconstruct(model, p, &beta, config)).collect()
}
