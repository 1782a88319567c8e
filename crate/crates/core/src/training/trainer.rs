use std::path::Path;

use diffcore::{checkpoint, AdamState, Tensor};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::losses::{batch_objective, eikonal_points, Batch, CodeSource, LossBreakdown, LossWeights};
use crate::binio::{read_file, write_atomic};
use crate::error::{format_err, HipError, Result};
use crate::model::{HipnetModel, ModelConfig};
use crate::seeds::{self, TAG_ORDER, TAG_STEP};
use crate::skeleton::{flatten, read_json, write_json, PoseVector, Skeleton};
use crate::synthdata::FrameRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda_eikonal: f64,
    pub lambda_normal: f64,
    pub surface_points: usize,
    pub eikonal_points: usize,
    pub lr: f64,
    pub epochs: usize,
    pub sigma_eikonal: f64,
    pub seed: u64,
    /// Per-joint specialization terms; off gives the base model.
    pub subnetwork_losses: bool,
    /// Rows per recorded tape. Only affects memory, not results beyond
    /// floating-point summation order.
    pub chunk_rows: usize,
    /// Write a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_eikonal: 0.1,
            lambda_normal: 0.1,
            surface_points: 25_000,
            eikonal_points: 25_000,
            lr: 1e-4,
            epochs: 200,
            sigma_eikonal: 0.05,
            seed: 0,
            subnetwork_losses: true,
            chunk_rows: 512,
            checkpoint_every: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_eikonal: self.lambda_eikonal,
            lambda_normal: self.lambda_normal,
            subnetworks: self.subnetwork_losses,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_eikonal < 0.0 || self.lambda_normal < 0.0 {
            return Err(HipError::Input("loss weights must be non-negative".into()));
        }
        if self.surface_points == 0 || self.eikonal_points == 0 {
            return Err(HipError::Input("point counts must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.sigma_eikonal >= 0.0) {
            return Err(HipError::Input("lr must be positive and sigma non-negative".into()));
        }
        self.model.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub epoch: usize,
    pub subject: usize,
    pub frame: usize,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: HipnetModel,
    pub adam: AdamState,
    pub epoch: usize,
    pub step_in_epoch: usize,
    pub global_step: usize,
}

impl TrainState {
    pub fn new(model: HipnetModel) -> Self {
        let adam = AdamState::new(model.params());
        TrainState {
            model,
            adam,
            epoch: 0,
            step_in_epoch: 0,
            global_step: 0,
        }
    }
}

/// Steps through epochs of frames, one frame per optimizer step. Frame order
/// and every sample drawn in a step are functions of (seed, epoch, step), so
/// a resumed run continues exactly where a saved one stopped.
pub struct Trainer<'a> {
    frames: &'a [FrameRecord],
    poses: Vec<PoseVector>,
    config: TrainConfig,
    state: TrainState,
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds::stream(seed, &[TAG_ORDER, epoch as u64]));
    order
}

impl<'a> Trainer<'a> {
    pub fn new(model: HipnetModel, frames: &'a [FrameRecord], config: TrainConfig) -> Result<Self> {
        Trainer::resume(TrainState::new(model), frames, config)
    }

    pub fn resume(state: TrainState, frames: &'a [FrameRecord], config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if frames.is_empty() {
            return Err(HipError::Input("training needs at least one frame".into()));
        }
        let model = &state.model;
        for f in frames {
            if f.cloud.is_empty() {
                return Err(HipError::Input("training frame has no points".into()));
            }
            if f.pose.len() != model.joints() {
                return Err(HipError::Input("frame pose does not match the model skeleton".into()));
            }
            if f.cloud.labels.len() != f.cloud.len() {
                return Err(HipError::Input("frame is missing joint assignments".into()));
            }
            if model.config.d_beta > 0 && f.cloud.subject as usize >= model.subjects() {
                return Err(HipError::UnknownSubject {
                    id: f.cloud.subject as usize,
                    known: (0..model.subjects()).collect(),
                });
            }
        }
        let poses = frames.iter().map(|f| flatten(&f.pose)).collect();
        Ok(Trainer {
            frames,
            poses,
            config,
            state,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.frames.len()
    }

    pub fn finished(&self) -> bool {
        self.state.epoch >= self.config.epochs
    }

    /// The batch drawn at (epoch, step) and the frame it came from.
    pub fn batch_at(&self, epoch: usize, step: usize) -> (usize, Batch) {
        let c = &self.config;
        let fi = epoch_order(c.seed, epoch, self.frames.len())[step];
        let cloud = &self.frames[fi].cloud;
        let mut rng = seeds::stream(c.seed, &[TAG_STEP, epoch as u64, step as u64]);
        let idx: Vec<usize> = if cloud.len() > c.surface_points {
            index::sample(&mut rng, cloud.len(), c.surface_points).into_vec()
        } else {
            (0..cloud.len()).collect()
        };
        let sub = cloud.subset(&idx);
        let eikonal = eikonal_points(&sub.points, c.eikonal_points, c.sigma_eikonal, &mut rng);
        (
            fi,
            Batch {
                surface: sub.points,
                normals: sub.normals,
                labels: sub.labels,
                eikonal,
            },
        )
    }

    /// One optimizer step. On a non-finite loss or gradient the state is left
    /// untouched and `Diverged` is returned.
    pub fn step(&mut self) -> Result<LossRecord> {
        let (epoch, step) = (self.state.epoch, self.state.step_in_epoch);
        let (fi, batch) = self.batch_at(epoch, step);
        let frame = &self.frames[fi];
        let model = &self.state.model;
        let code = if model.config.d_beta > 0 {
            CodeSource::Table(frame.cloud.subject as usize)
        } else {
            CodeSource::None
        };
        let (loss, grads) = batch_objective(
            model,
            &self.poses[fi],
            code,
            &batch,
            &self.config.weights(),
            self.config.chunk_rows,
        )?;
        let global = self.state.global_step;
        if !loss.total.is_finite() || !grads.iter().all(Tensor::is_finite) {
            return Err(HipError::Diverged { step: global });
        }
        let TrainState { model, adam, .. } = &mut self.state;
        adam.step(model.params_mut(), &grads, self.config.lr)
            .map_err(|_| HipError::Diverged { step: global })?;
        self.state.global_step += 1;
        self.state.step_in_epoch += 1;
        if self.state.step_in_epoch == self.frames.len() {
            self.state.step_in_epoch = 0;
            self.state.epoch += 1;
        }
        Ok(LossRecord {
            step: global,
            epoch,
            subject: frame.cloud.subject as usize,
            frame: fi,
            loss,
        })
    }

    /// Runs to the configured epoch count (or `max_steps` more steps),
    /// calling `on_step` after every step.
    pub fn run(
        &mut self,
        max_steps: Option<usize>,
        mut on_step: impl FnMut(&TrainState, &LossRecord) -> Result<()>,
    ) -> Result<Vec<LossRecord>> {
        let mut history = Vec::new();
        while !self.finished() && max_steps.is_none_or(|m| history.len() < m) {
            let rec = self.step()?;
            on_step(&self.state, &rec)?;
            history.push(rec);
        }
        Ok(history)
    }
}

/// Trains `model` on `frames` for the configured epochs.
pub fn train(
    model: HipnetModel,
    frames: &[FrameRecord],
    config: &TrainConfig,
) -> Result<(HipnetModel, Vec<LossRecord>)> {
    let mut t = Trainer::new(model, frames, config.clone())?;
    let history = t.run(None, |_, _| Ok(()))?;
    Ok((t.into_state().model, history))
}

pub const MODEL_FILE: &str = "model.hipw";
pub const OPTIMIZER_FILE: &str = "optimizer.hipw";
pub const PROGRESS_FILE: &str = "progress.json";
pub const LOSS_FILE: &str = "losses.csv";

#[derive(Serialize, Deserialize)]
struct Progress {
    epoch: usize,
    step_in_epoch: usize,
    global_step: usize,
    adam_step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

/// Writes model, optimizer moments, and progress counters into `dir`.
pub fn save_state(dir: &Path, state: &TrainState, subject_ids: &[usize]) -> Result<()> {
    state.model.save(&dir.join(MODEL_FILE), subject_ids)?;
    let names = state.model.param_names();
    let mut entries = Vec::with_capacity(2 * names.len());
    for (n, t) in names.iter().zip(&state.adam.m) {
        entries.push((format!("m.{n}"), t.clone()));
    }
    for (n, t) in names.iter().zip(&state.adam.v) {
        entries.push((format!("v.{n}"), t.clone()));
    }
    let mut bytes = Vec::new();
    checkpoint::write_params(&mut bytes, &entries)?;
    write_atomic(&dir.join(OPTIMIZER_FILE), &bytes)?;
    write_json(
        &dir.join(PROGRESS_FILE),
        &Progress {
            epoch: state.epoch,
            step_in_epoch: state.step_in_epoch,
            global_step: state.global_step,
            adam_step: state.adam.step,
            beta1: state.adam.beta1,
            beta2: state.adam.beta2,
            eps: state.adam.eps,
        },
    )
}

pub fn load_state(dir: &Path, skeleton: &Skeleton) -> Result<(TrainState, Vec<usize>)> {
    let (model, ids) = HipnetModel::load(&dir.join(MODEL_FILE), skeleton)?;
    let p: Progress = read_json(&dir.join(PROGRESS_FILE))?;
    let opt_path = dir.join(OPTIMIZER_FILE);
    let entries = checkpoint::read_params(&read_file(&opt_path)?[..])?;
    let n = model.params().len();
    if entries.len() != 2 * n {
        return Err(format_err(&opt_path, "optimizer state does not match the model"));
    }
    let mut it = entries.into_iter().map(|(_, t)| t);
    let m: Vec<Tensor> = it.by_ref().take(n).collect();
    let v: Vec<Tensor> = it.collect();
    for ((a, b), p) in m.iter().zip(&v).zip(model.params()) {
        if a.shape() != p.shape() || b.shape() != p.shape() {
            return Err(format_err(&opt_path, "optimizer moment shape mismatch"));
        }
    }
    let adam = AdamState {
        step: p.adam_step,
        m,
        v,
        beta1: p.beta1,
        beta2: p.beta2,
        eps: p.eps,
    };
    Ok((
        TrainState {
            model,
            adam,
            epoch: p.epoch,
            step_in_epoch: p.step_in_epoch,
            global_step: p.global_step,
        },
        ids,
    ))
}

pub fn loss_csv_header(joints: usize) -> String {
    let mut cols: Vec<String> = ["step", "epoch", "subject", "frame", "surface", "normal", "eikonal", "total"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..joints).map(|k| format!("surface_{k}")));
    cols.extend((0..joints).map(|k| format!("normal_{k}")));
    cols.join(",")
}

pub fn loss_csv_row(r: &LossRecord) -> String {
    let l = &r.loss;
    let mut cols = vec![
        r.step.to_string(),
        r.epoch.to_string(),
        r.subject.to_string(),
        r.frame.to_string(),
        l.surface.to_string(),
        l.normal.to_string(),
        l.eikonal.to_string(),
        l.total.to_string(),
    ];
    cols.extend(l.surface_k.iter().map(f64::to_string));
    cols.extend(l.normal_k.iter().map(f64::to_string));
    cols.join(",")
}

/// Writes the loss history, keeping any rows already in `path` that precede
/// the first new step (so resumed runs extend the file).
pub fn write_loss_csv(path: &Path, joints: usize, records: &[LossRecord]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&loss_csv_header(joints));
    out.push('\n');
    let first = records.first().map_or(usize::MAX, |r| r.step);
    if let Ok(old) = std::fs::read_to_string(path) {
        for line in old.lines().skip(1) {
            let step: Option<usize> = line.split(',').next().and_then(|s| s.parse().ok());
            if step.is_some_and(|s| s < first) {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    for r in records {
        out.push_str(&loss_csv_row(r));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
