use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{HipError, Result};
use crate::geom::{Aabb, P3};
use crate::seeds::{self, TAG_EVAL};
use crate::skeleton::Pose;
use crate::synthdata::{sample_surface, CapsuleFigure};

use super::bvh::TriangleBvh;
use super::marching::{extract_mesh, extract_mesh_banded};
use super::mesh::Mesh;

/// Growth of the ground-truth box for uniform samples.
pub const BOX_STRETCH: f64 = 1.1;
pub const NEAR_SURFACE_SIGMA: f64 = 0.03;
pub const DEFAULT_SAMPLES: usize = 100_000;

// Sub-stream tags under TAG_EVAL.
const UNIFORM: u64 = 0;
const NOISE: u64 = 1;
const PRED_SAMPLES: u64 = 2;
const GT_SAMPLES: u64 = 3;
const SURFACE: u64 = 4;

pub fn occupancy(values: &[f64]) -> Vec<bool> {
    values.iter().map(|&v| v <= 0.0).collect()
}

/// Intersection over union of two occupancy vectors, in percent.
pub fn iou(pred: &[bool], gt: &[bool]) -> Result<f64> {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        inter += usize::from(p && g);
        union += usize::from(p || g);
    }
    if union == 0 {
        return Err(HipError::EmptyUnion);
    }
    Ok(100.0 * inter as f64 / union as f64)
}

fn occupancies(
    pred: &impl Fn(&[P3]) -> Result<Vec<f64>>,
    gt: &impl Fn(&[P3]) -> Result<Vec<f64>>,
    points: &[P3],
) -> Result<(Vec<bool>, Vec<bool>)> {
    Ok((occupancy(&pred(points)?), occupancy(&gt(points)?)))
}

/// IoU over points drawn uniformly from the ground-truth box stretched by
/// 10% about its centre.
pub fn uniform_miou(
    pred: impl Fn(&[P3]) -> Result<Vec<f64>>,
    gt: impl Fn(&[P3]) -> Result<Vec<f64>>,
    gt_bounds: &Aabb,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let b = gt_bounds.scaled(BOX_STRETCH);
    let mut rng = seeds::stream(seed, &[TAG_EVAL, UNIFORM]);
    let points: Vec<P3> = (0..samples).map(|_| b.sample(&mut rng)).collect();
    let (p, g) = occupancies(&pred, &gt, &points)?;
    iou(&p, &g)
}

/// Surface points moved by isotropic Gaussian noise of std `sigma` per axis.
pub fn perturb(surface: &[P3], sigma: f64, seed: u64) -> Result<Vec<P3>> {
    let normal = Normal::new(0.0, sigma).map_err(|e| HipError::Input(e.to_string()))?;
    let mut rng = seeds::stream(seed, &[TAG_EVAL, NOISE]);
    Ok(surface
        .iter()
        .map(|p| p.map(|c| c + normal.sample(&mut rng)))
        .collect())
}

pub fn near_surface_miou(
    pred: impl Fn(&[P3]) -> Result<Vec<f64>>,
    gt: impl Fn(&[P3]) -> Result<Vec<f64>>,
    surface: &[P3],
    sigma: f64,
    seed: u64,
) -> Result<f64> {
    let points = perturb(surface, sigma, seed)?;
    let (p, g) = occupancies(&pred, &gt, &points)?;
    iou(&p, &g)
}

/// Near-surface IoU per joint, over perturbed points whose source surface
/// point carries that joint's label. Joints without points (or with an
/// empty union) are `None`.
pub fn per_joint_miou(
    pred: impl Fn(&[P3]) -> Result<Vec<f64>>,
    gt: impl Fn(&[P3]) -> Result<Vec<f64>>,
    surface: &[P3],
    labels: &[u16],
    joints: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    if labels.len() != surface.len() {
        return Err(HipError::Length {
            what: "labels",
            expected: surface.len(),
            got: labels.len(),
        });
    }
    let points = perturb(surface, sigma, seed)?;
    let (p, g) = occupancies(&pred, &gt, &points)?;
    Ok(split_by_joint(&p, &g, labels, joints))
}

fn split_by_joint(p: &[bool], g: &[bool], labels: &[u16], joints: usize) -> Vec<Option<f64>> {
    (0..joints)
        .map(|k| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] as usize == k).collect();
            let pk: Vec<bool> = idx.iter().map(|&i| p[i]).collect();
            let gk: Vec<bool> = idx.iter().map(|&i| g[i]).collect();
            iou(&pk, &gk).ok()
        })
        .collect()
}

fn mean_distance(points: &[P3], target: &TriangleBvh) -> f64 {
    let d: Vec<f64> = points.par_iter().map(|p| target.distance(p)).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Symmetric mean surface distance between two meshes, in units of a tenth
/// of the ground-truth bounding box's longest edge. Distances are to the
/// opposing mesh's triangles.
pub fn chamfer_l1(pred: &Mesh, gt: &Mesh, samples: usize, seed: u64) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(HipError::EmptyMesh);
    }
    if samples == 0 {
        return Err(HipError::Input("chamfer needs at least one sample".into()));
    }
    let ps = pred.sample(samples, &mut seeds::stream(seed, &[TAG_EVAL, PRED_SAMPLES]))?;
    let gs = gt.sample(samples, &mut seeds::stream(seed, &[TAG_EVAL, GT_SAMPLES]))?;
    let accuracy = mean_distance(&ps, &TriangleBvh::new(gt));
    let completeness = mean_distance(&gs, &TriangleBvh::new(pred));
    let unit = 0.1 * gt.bounds().ok_or(HipError::EmptyMesh)?.max_edge();
    Ok(0.5 * (accuracy + completeness) / unit)
}

/// Signed occupancy of a closed mesh: −1 inside, +1 outside.
pub fn mesh_occupancy(bvh: &TriangleBvh, points: &[P3]) -> Vec<f64> {
    points
        .par_iter()
        .map(|p| if bvh.contains(p) { -1.0 } else { 1.0 })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub uniform_samples: usize,
    pub surface_samples: usize,
    pub chamfer_samples: usize,
    pub sigma: f64,
    pub resolution: usize,
    /// Padding around the joint box for mesh extraction.
    pub pad: f64,
    /// Coarse-grid stride for narrow-band extraction of learned fields.
    pub band_stride: usize,
    pub neighbors: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            uniform_samples: DEFAULT_SAMPLES,
            surface_samples: DEFAULT_SAMPLES,
            chamfer_samples: DEFAULT_SAMPLES,
            sigma: NEAR_SURFACE_SIGMA,
            resolution: 96,
            pad: 0.3,
            band_stride: 4,
            neighbors: assignment::DEFAULT_NEIGHBORS,
            seed: 0,
        }
    }
}

/// Mesh extraction box: joint positions padded by `pad`.
pub fn pose_bounds(pose: &Pose, pad: f64) -> Aabb {
    let pts: Vec<P3> = pose.positions().iter().map(|v| [v.x, v.y, v.z]).collect();
    Aabb::from_points(&pts).expect("poses have joints").padded(pad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub subject: u32,
    pub frame: u32,
    pub uniform_miou: f64,
    pub near_surface_miou: f64,
    pub per_joint_near_surface_iou: Vec<Option<f64>>,
    pub chamfer_l1: f64,
}

/// Scores a predicted field on one posed subject against its analytic
/// ground truth. `seed` should differ per frame.
pub fn evaluate_frame(
    pred: impl Fn(&[P3]) -> Result<Vec<f64>> + Copy,
    figure: &CapsuleFigure,
    pose: &Pose,
    config: &EvalConfig,
    seed: u64,
) -> Result<FrameMetrics> {
    let posed = figure.posed(pose);
    let gt = |pts: &[P3]| -> Result<Vec<f64>> { Ok(posed.sdf_batch(pts)) };
    let uniform = uniform_miou(pred, gt, &posed.bounds(), config.uniform_samples, seed)?;
    let cloud = sample_surface(figure, pose, config.surface_samples, seeds::derive(seed, &[TAG_EVAL, SURFACE]))?;
    let labels = assignment::assign(&cloud.points, pose, config.neighbors)?;
    let points = perturb(&cloud.points, config.sigma, seed)?;
    let (p, g) = occupancies(&pred, &gt, &points)?;
    let near = iou(&p, &g)?;
    let per_joint = split_by_joint(&p, &g, &labels, pose.len());
    let bounds = pose_bounds(pose, config.pad);
    let gt_mesh = extract_mesh(gt, config.resolution, &bounds)?;
    let pred_mesh = extract_mesh_banded(pred, config.resolution, &bounds, config.band_stride)?;
    let chamfer = chamfer_l1(&pred_mesh, &gt_mesh, config.chamfer_samples, seed)?;
    Ok(FrameMetrics {
        subject: pose.subject,
        frame: pose.frame,
        uniform_miou: uniform,
        near_surface_miou: near,
        per_joint_near_surface_iou: per_joint,
        chamfer_l1: chamfer,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: EvalConfig,
    pub uniform_miou: f64,
    pub near_surface_miou: f64,
    pub per_joint_near_surface_iou: Vec<Option<f64>>,
    pub chamfer_l1: f64,
    pub frames: Vec<FrameMetrics>,
}

impl MetricReport {
    /// Means over frames; a joint's mean skips frames where it is absent.
    pub fn aggregate(config: EvalConfig, frames: Vec<FrameMetrics>) -> Result<Self> {
        if frames.is_empty() {
            return Err(HipError::Input("no frames to aggregate".into()));
        }
        let n = frames.len() as f64;
        let joints = frames.iter().map(|f| f.per_joint_near_surface_iou.len()).max().unwrap_or(0);
        let per_joint = (0..joints)
            .map(|k| {
                let v: Vec<f64> = frames
                    .iter()
                    .filter_map(|f| f.per_joint_near_surface_iou.get(k).copied().flatten())
                    .collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        Ok(MetricReport {
            uniform_miou: frames.iter().map(|f| f.uniform_miou).sum::<f64>() / n,
            near_surface_miou: frames.iter().map(|f| f.near_surface_miou).sum::<f64>() / n,
            chamfer_l1: frames.iter().map(|f| f.chamfer_l1).sum::<f64>() / n,
            per_joint_near_surface_iou: per_joint,
            config,
            frames,
        })
    }
}
