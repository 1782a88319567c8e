//! Articulated capsule figures with exact ground truth.
//!
//! A figure is a union of capsules, one per bone, posed by forward
//! kinematics. Its signed distance, normals, and occupancy are all exact,
//! which makes every evaluation metric computable against an oracle.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::binio::{
    build_dir_atomic, get_f64s, get_u16, get_u32, put_f64s, put_u16, put_u32, read_file,
    write_atomic,
};
use crate::error::{format_err, HipError, Result};
use crate::geom::{closest_on_segment, p3, v3, Aabb, P3};
use crate::seeds::{self, TAG_FIGURE, TAG_MOTION, TAG_SURFACE};
use crate::skeleton::{
    canonicalize, flatten, forward_kinematics, read_json, rot_x, rot_y, rot_z, unflatten,
    write_json, write_pose_stream, Joint, Mat3, Pose, Skeleton, Vec3, POSE_STRIDE,
};

/// Above this rejected fraction, sampling gives up.
const MAX_REJECTED: f64 = 0.99;

#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleFigure {
    pub skeleton: Skeleton,
    /// Base radius of the bone ending at joint `k + 1`.
    pub bone_radius: Vec<f64>,
    pub scale: f64,
}

impl CapsuleFigure {
    pub fn new(skeleton: Skeleton, bone_radius: Vec<f64>, scale: f64) -> Result<Self> {
        if bone_radius.len() + 1 != skeleton.len() {
            return Err(HipError::Length {
                what: "bone radii",
                expected: skeleton.len() - 1,
                got: bone_radius.len(),
            });
        }
        if !(scale > 0.0 && scale.is_finite()) || bone_radius.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(HipError::Input("radii and scale must be positive".into()));
        }
        for (k, j) in skeleton.joints().iter().enumerate().skip(1) {
            if j.offset.norm() == 0.0 {
                return Err(HipError::Input(format!("bone ending at joint {k} has zero length")));
            }
        }
        Ok(CapsuleFigure {
            skeleton,
            bone_radius,
            scale,
        })
    }

    pub fn radius(&self, child: usize) -> f64 {
        self.bone_radius[child - 1] * self.scale
    }

    pub fn posed(&self, pose: &Pose) -> PosedFigure {
        let capsules = self
            .skeleton
            .bones()
            .into_iter()
            .map(|(p, c)| Capsule {
                a: pose.position(p),
                b: pose.position(c),
                radius: self.radius(c),
                joint: c,
            })
            .collect();
        PosedFigure { capsules }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
    /// Child joint of the generating bone.
    pub joint: usize,
}

impl Capsule {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        (p - closest_on_segment(p, &self.a, &self.b)).norm() - self.radius
    }

    fn lateral_area(&self) -> f64 {
        2.0 * PI * self.radius * (self.b - self.a).norm()
    }

    pub fn area(&self) -> f64 {
        self.lateral_area() + 4.0 * PI * self.radius * self.radius
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::from_points([&p3(&self.a), &p3(&self.b)]).unwrap();
        b = b.padded(self.radius);
        b
    }

    /// Area-uniform point on the capsule surface and its outward normal.
    fn sample(&self, rng: &mut impl Rng) -> (Vec3, Vec3) {
        let axis = self.b - self.a;
        let dir = axis.normalize();
        if rng.random::<f64>() * self.area() < self.lateral_area() {
            let helper = if dir.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let e1 = dir.cross(&helper).normalize();
            let e2 = dir.cross(&e1);
            let theta = 2.0 * PI * rng.random::<f64>();
            let n = e1 * theta.cos() + e2 * theta.sin();
            (self.a + axis * rng.random::<f64>() + n * self.radius, n)
        } else {
            let n = loop {
                let g = Vec3::from_fn(|_, _| StandardNormal.sample(rng));
                let len = g.norm();
                if len > 1e-12 {
                    break g / len;
                }
            };
            // each hemisphere belongs to the cap on its side of the axis
            let c = if n.dot(&dir) >= 0.0 { self.b } else { self.a };
            (c + n * self.radius, n)
        }
    }
}

/// A capsule figure in one pose.
#[derive(Clone, Debug, PartialEq)]
pub struct PosedFigure {
    pub capsules: Vec<Capsule>,
}

impl PosedFigure {
    pub fn sdf(&self, p: &P3) -> f64 {
        let p = v3(p);
        self.capsules
            .iter()
            .map(|c| c.sdf(&p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sdf_batch(&self, pts: &[P3]) -> Vec<f64> {
        pts.iter().map(|p| self.sdf(p)).collect()
    }

    /// Index of the capsule attaining the minimum (lowest index on ties).
    pub fn closest_capsule(&self, p: &P3) -> usize {
        let p = v3(p);
        let mut best = (f64::INFINITY, 0);
        for (i, c) in self.capsules.iter().enumerate() {
            let d = c.sdf(&p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Gradient of the SDF: the unit vector away from the closest bone axis.
    pub fn gradient(&self, p: &P3) -> Vec3 {
        let c = &self.capsules[self.closest_capsule(p)];
        let q = v3(p);
        (q - closest_on_segment(&q, &c.a, &c.b)).normalize()
    }

    /// Tight axis-aligned bounds of the union.
    pub fn bounds(&self) -> Aabb {
        self.capsules
            .iter()
            .map(Capsule::bounds)
            .reduce(|a, b| a.union(&b))
            .expect("figure has at least one bone")
    }

    /// Area-weighted samples on the union surface. Returns points, outward
    /// normals, and the generating bone's child joint per point.
    pub fn sample_surface(
        &self,
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<(Vec<P3>, Vec<P3>, Vec<u16>)> {
        if count == 0 {
            return Err(HipError::Input("surface sample count must be positive".into()));
        }
        let areas: Vec<f64> = self.capsules.iter().map(Capsule::area).collect();
        let total: f64 = areas.iter().sum();
        let mut points = Vec::with_capacity(count);
        let mut normals = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        let (mut attempts, mut rejected) = (0usize, 0usize);
        while points.len() < count {
            attempts += 1;
            let mut u = rng.random::<f64>() * total;
            let mut i = 0;
            while i + 1 < areas.len() && u >= areas[i] {
                u -= areas[i];
                i += 1;
            }
            let (p, n) = self.capsules[i].sample(rng);
            let inside_other = self
                .capsules
                .iter()
                .enumerate()
                .any(|(j, c)| j != i && c.sdf(&p) < 0.0);
            if inside_other {
                rejected += 1;
                if attempts >= 1000 && rejected as f64 > MAX_REJECTED * attempts as f64 {
                    return Err(HipError::RejectionStarved { rejected, attempts });
                }
                continue;
            }
            points.push(p3(&p));
            normals.push(p3(&n));
            labels.push(self.capsules[i].joint as u16);
        }
        Ok((points, normals, labels))
    }
}

pub fn analytic_sdf(figure: &CapsuleFigure, pose: &Pose, x: &P3) -> f64 {
    figure.posed(pose).sdf(x)
}

/// Oriented surface samples of one posed subject.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientedCloud {
    pub points: Vec<P3>,
    pub normals: Vec<P3>,
    pub labels: Vec<u16>,
    pub subject: u32,
    pub frame: u32,
}

impl OrientedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> OrientedCloud {
        OrientedCloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: idx.iter().map(|&i| self.normals[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            subject: self.subject,
            frame: self.frame,
        }
    }

    /// Points whose normal faces a viewer looking down -z, i.e. n·(+z) ≥ 0.
    pub fn front_only(&self) -> OrientedCloud {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.normals[i][2] >= 0.0).collect();
        self.subset(&idx)
    }
}

pub fn sample_surface(
    figure: &CapsuleFigure,
    pose: &Pose,
    count: usize,
    seed: u64,
) -> Result<OrientedCloud> {
    let mut rng = seeds::stream(seed, &[TAG_SURFACE]);
    let (points, normals, labels) = figure.posed(pose).sample_surface(count, &mut rng)?;
    Ok(OrientedCloud {
        points,
        normals,
        labels,
        subject: pose.subject,
        frame: pose.frame,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub pose: Pose,
    pub cloud: OrientedCloud,
}

pub const FRAME_MAGIC: &[u8; 4] = b"HIPF";
pub const FRAME_VERSION: u32 = 1;

impl FrameRecord {
    pub fn encode(&self) -> Vec<u8> {
        let c = &self.cloud;
        let n = self.pose.len();
        let mut out = Vec::with_capacity(16 + c.len() * 50 + n * 96);
        out.extend_from_slice(FRAME_MAGIC);
        put_u32(&mut out, FRAME_VERSION).unwrap();
        put_u32(&mut out, c.len() as u32).unwrap();
        put_u32(&mut out, n as u32).unwrap();
        put_f64s(&mut out, c.points.as_flattened()).unwrap();
        put_f64s(&mut out, c.normals.as_flattened()).unwrap();
        for &l in &c.labels {
            put_u16(&mut out, l).unwrap();
        }
        put_f64s(&mut out, &flatten(&self.pose).0).unwrap();
        out
    }

    pub fn decode(bytes: &[u8], path: &Path, subject: u32, frame: u32) -> Result<FrameRecord> {
        let bad = |m: &str| format_err(path, m);
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != FRAME_MAGIC {
            return Err(bad("not a HIPF frame record"));
        }
        let version = get_u32(&mut r).map_err(|_| bad("truncated header"))?;
        if version != FRAME_VERSION {
            return Err(bad(&format!("unsupported frame version {version}")));
        }
        let m = get_u32(&mut r).map_err(|_| bad("truncated header"))? as usize;
        let n = get_u32(&mut r).map_err(|_| bad("truncated header"))? as usize;
        let to_p3 = |v: Vec<f64>| v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let points = to_p3(get_f64s(&mut r, 3 * m).map_err(|_| bad("truncated points"))?);
        let normals = to_p3(get_f64s(&mut r, 3 * m).map_err(|_| bad("truncated normals"))?);
        let labels = (0..m)
            .map(|_| get_u16(&mut r))
            .collect::<std::io::Result<Vec<u16>>>()
            .map_err(|_| bad("truncated assignments"))?;
        let pv = get_f64s(&mut r, n * POSE_STRIDE).map_err(|_| bad("truncated pose"))?;
        let pose = unflatten(&pv, frame, subject)?;
        Ok(FrameRecord {
            pose,
            cloud: OrientedCloud {
                points,
                normals,
                labels,
                subject,
                frame,
            },
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn read(path: &Path, subject: u32, frame: u32) -> Result<FrameRecord> {
        FrameRecord::decode(&read_file(path)?, path, subject, frame)
    }
}

/// The six-joint figure used throughout: pelvis and chest joined by the
/// torso, and a collar plus a straight arm on each side.
pub fn desk_skeleton() -> Skeleton {
    let j = |name: &str, parent: Option<usize>, o: [f64; 3]| Joint {
        name: name.into(),
        parent,
        offset: Vec3::from(o),
    };
    Skeleton::new(vec![
        j("pelvis", None, [0.0, 0.0, 0.0]),
        j("chest", Some(0), [0.0, 0.4, 0.0]),
        j("l_shoulder", Some(1), [0.17, 0.0, 0.0]),
        j("l_hand", Some(2), [0.45, 0.0, 0.0]),
        j("r_shoulder", Some(1), [-0.17, 0.0, 0.0]),
        j("r_hand", Some(4), [-0.45, 0.0, 0.0]),
    ])
    .expect("desk skeleton is valid")
}

pub const DESK_BONE_RADIUS: [f64; 5] = [0.16, 0.1, 0.09, 0.1, 0.09];

/// Subject `s` of `count`: a global radius scale stratified over [0.8, 1.2]
/// and ±10% jitter per bone.
pub fn subject_figure(skeleton: &Skeleton, base: &[f64], s: usize, count: usize, seed: u64) -> Result<CapsuleFigure> {
    let mut rng = seeds::stream(seed, &[TAG_FIGURE, s as u64]);
    let scale = 0.8 + 0.4 * (s as f64 + rng.random::<f64>()) / count as f64;
    let radii = base
        .iter()
        .map(|r| r * (1.0 + 0.1 * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    CapsuleFigure::new(skeleton.clone(), radii, scale)
}

/// Per-joint Euler limits in radians, applied as `Ry(y) * Rz(z) * Rx(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLimits {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl JointLimits {
    pub fn fixed() -> Self {
        JointLimits { lo: [0.0; 3], hi: [0.0; 3] }
    }

    pub fn symmetric(x: f64, y: f64, z: f64) -> Self {
        JointLimits {
            lo: [-x, -y, -z],
            hi: [x, y, z],
        }
    }
}

fn deg(d: f64) -> f64 {
    d.to_radians()
}

/// Limits for [`desk_skeleton`]. The root's heading is unrestricted.
pub fn desk_limits() -> Vec<JointLimits> {
    vec![
        JointLimits::symmetric(deg(15.0), PI, deg(15.0)),
        JointLimits::symmetric(deg(25.0), deg(30.0), deg(15.0)),
        JointLimits {
            lo: [0.0, deg(-80.0), deg(-70.0)],
            hi: [0.0, deg(30.0), deg(60.0)],
        },
        JointLimits::fixed(),
        JointLimits {
            lo: [0.0, deg(-30.0), deg(-60.0)],
            hi: [0.0, deg(80.0), deg(70.0)],
        },
        JointLimits::fixed(),
    ]
}

fn euler(a: [f64; 3]) -> Mat3 {
    rot_y(a[1]) * rot_z(a[2]) * rot_x(a[0])
}

const KNOTS: usize = 4;

/// Catmull-Rom through `k` with clamped ends, evaluated at t in [0, 1].
fn spline(k: &[f64], t: f64) -> f64 {
    let segs = (k.len() - 1) as f64;
    let s = (t * segs).min(segs - 1e-12).max(0.0);
    let i = s.floor() as usize;
    let u = s - i as f64;
    let at = |j: isize| k[j.clamp(0, k.len() as isize - 1) as usize];
    let (p0, p1, p2, p3) = (at(i as isize - 1), at(i as isize), at(i as isize + 1), at(i as isize + 2));
    0.5 * (2.0 * p1
        + (p2 - p0) * u
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u * u
        + (3.0 * p1 - p0 - 3.0 * p2 + p3) * u * u * u)
}

/// A smooth random motion: every joint angle follows a spline through random
/// knots inside its limits. Poses are returned in the canonical frame.
pub fn random_motion(
    skeleton: &Skeleton,
    limits: &[JointLimits],
    frames: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Pose>> {
    if limits.len() != skeleton.len() {
        return Err(HipError::Length {
            what: "joint limits",
            expected: skeleton.len(),
            got: limits.len(),
        });
    }
    let mut knots = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>()).collect() };
    let angle_knots: Vec<[Vec<f64>; 3]> = (0..skeleton.len())
        .map(|_| [knots(KNOTS), knots(KNOTS), knots(KNOTS)])
        .collect();
    let trans_knots = [knots(KNOTS), knots(KNOTS)];
    (0..frames)
        .map(|f| {
            let t = if frames > 1 { f as f64 / (frames - 1) as f64 } else { 0.0 };
            let rots: Vec<Mat3> = limits
                .iter()
                .zip(&angle_knots)
                .map(|(lim, k)| {
                    euler([0, 1, 2].map(|a| {
                        let u = spline(&k[a], t).clamp(0.0, 1.0);
                        lim.lo[a] + (lim.hi[a] - lim.lo[a]) * u
                    }))
                })
                .collect();
            let root = Vec3::new(
                4.0 * spline(&trans_knots[0], t) - 2.0,
                0.0,
                4.0 * spline(&trans_knots[1], t) - 2.0,
            );
            let mut pose = canonicalize(&forward_kinematics(skeleton, &rots, root)?);
            pose.frame = f as u32;
            Ok(pose)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub subjects: usize,
    pub sequences: usize,
    pub frames: usize,
    pub points: usize,
    pub seed: u64,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
}

fn default_neighbors() -> usize {
    assignment::DEFAULT_NEIGHBORS
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.sequences == 0 || self.frames == 0 || self.points == 0 {
            return Err(HipError::Input(
                "subjects, sequences, frames and points must all be positive".into(),
            ));
        }
        if self.points <= self.neighbors {
            return Err(HipError::Input(format!(
                "points per frame ({}) must exceed the neighbour count ({})",
                self.points, self.neighbors
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Number of training sequences out of `n` under the 75/25 split.
pub fn train_count(n: usize) -> usize {
    ((3 * n + 2) / 4).clamp(1, n.saturating_sub(1).max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: usize,
    pub scale: f64,
    pub bone_radius: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub subject: usize,
    pub sequence: usize,
    pub split: Split,
    pub poses: String,
    pub frames: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config: DatasetConfig,
    pub skeleton: String,
    pub subjects: Vec<SubjectEntry>,
    pub sequences: Vec<SequenceEntry>,
    /// Train/test sequence ids keyed by subject id.
    pub splits: BTreeMap<String, SplitIds>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SKELETON_FILE: &str = "skeleton.json";

/// Generates a complete dataset of [`desk_skeleton`] figures under `out`.
pub fn make_dataset(config: &DatasetConfig, out: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let skeleton = desk_skeleton();
    let limits = desk_limits();
    let figures = (0..config.subjects)
        .map(|s| subject_figure(&skeleton, &DESK_BONE_RADIUS, s, config.subjects, config.seed))
        .collect::<Result<Vec<_>>>()?;
    let motions = (0..config.subjects)
        .map(|s| {
            (0..config.sequences)
                .map(|q| {
                    let mut rng = seeds::stream(config.seed, &[TAG_MOTION, s as u64, q as u64]);
                    let mut m = random_motion(&skeleton, &limits, config.frames, &mut rng)?;
                    for p in &mut m {
                        p.subject = s as u32;
                    }
                    Ok(m)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    write_dataset(config, &figures, &motions, out)
}

/// Writes figures and their motions (indexed `[subject][sequence][frame]`)
/// as a dataset directory. Surface samples and geodesic labels are computed
/// here; everything is a function of `config.seed` alone.
pub fn write_dataset(
    config: &DatasetConfig,
    figures: &[CapsuleFigure],
    motions: &[Vec<Vec<Pose>>],
    out: &Path,
) -> Result<DatasetManifest> {
    config.validate()?;
    if figures.is_empty() || figures.len() != motions.len() {
        return Err(HipError::Input("need one motion set per subject".into()));
    }
    let skeleton = &figures[0].skeleton;
    build_dir_atomic(out, |dir| {
        skeleton.save(&dir.join(SKELETON_FILE))?;
        let mut sequences = Vec::new();
        let mut splits = BTreeMap::new();
        for (s, (figure, seqs)) in figures.iter().zip(motions).enumerate() {
            let n_train = train_count(seqs.len());
            let mut ids = SplitIds::default();
            for (q, poses) in seqs.iter().enumerate() {
                let split = if q < n_train { Split::Train } else { Split::Test };
                match split {
                    Split::Train => ids.train.push(q),
                    Split::Test => ids.test.push(q),
                }
                let pose_rel = format!("poses/s{s}_q{q}.hipp");
                write_pose_stream(&dir.join(&pose_rel), skeleton.len(), poses)?;
                let records: Vec<(String, Vec<u8>)> = poses
                    .par_iter()
                    .enumerate()
                    .map(|(f, pose)| {
                        let seed = seeds::derive(config.seed, &[TAG_SURFACE, s as u64, q as u64, f as u64]);
                        let mut cloud = sample_surface(figure, pose, config.points, seed)?;
                        cloud.labels = assignment::assign(&cloud.points, pose, config.neighbors)?;
                        let rec = FrameRecord {
                            pose: pose.clone(),
                            cloud,
                        };
                        Ok((format!("frames/s{s}_q{q}_f{f:04}.hipf"), rec.encode()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut frames = Vec::with_capacity(records.len());
                for (rel, bytes) in records {
                    write_atomic(&dir.join(&rel), &bytes)?;
                    frames.push(rel);
                }
                sequences.push(SequenceEntry {
                    subject: s,
                    sequence: q,
                    split,
                    poses: pose_rel,
                    frames,
                });
            }
            splits.insert(s.to_string(), ids);
        }
        let manifest = DatasetManifest {
            version: 1,
            config: config.clone(),
            skeleton: SKELETON_FILE.into(),
            subjects: figures
                .iter()
                .enumerate()
                .map(|(id, f)| SubjectEntry {
                    id,
                    scale: f.scale,
                    bone_radius: f.bone_radius.clone(),
                })
                .collect(),
            sequences,
            splits,
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameRef {
    pub subject: usize,
    pub sequence: usize,
    pub frame: usize,
    pub path: PathBuf,
}

/// An on-disk dataset opened for reading.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub skeleton: Skeleton,
    pub figures: Vec<CapsuleFigure>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Dataset> {
        let manifest: DatasetManifest = read_json(&root.join(MANIFEST_FILE))?;
        let skeleton = Skeleton::load(&root.join(&manifest.skeleton))?;
        let figures = manifest
            .subjects
            .iter()
            .map(|s| CapsuleFigure::new(skeleton.clone(), s.bone_radius.clone(), s.scale))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            root: root.to_path_buf(),
            manifest,
            skeleton,
            figures,
        })
    }

    pub fn subject_count(&self) -> usize {
        self.figures.len()
    }

    pub fn frames(&self, split: Split) -> Vec<FrameRef> {
        self.manifest
            .sequences
            .iter()
            .filter(|s| s.split == split)
            .flat_map(|s| {
                s.frames.iter().enumerate().map(move |(f, rel)| FrameRef {
                    subject: s.subject,
                    sequence: s.sequence,
                    frame: f,
                    path: self.root.join(rel),
                })
            })
            .collect()
    }

    pub fn sequence(&self, subject: usize, sequence: usize) -> Option<&SequenceEntry> {
        self.manifest
            .sequences
            .iter()
            .find(|s| s.subject == subject && s.sequence == sequence)
    }

    pub fn load(&self, r: &FrameRef) -> Result<FrameRecord> {
        FrameRecord::read(&r.path, r.subject as u32, r.frame as u32)
    }

    pub fn load_all(&self, refs: &[FrameRef]) -> Result<Vec<FrameRecord>> {
        refs.iter().map(|r| self.load(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_bone(r: f64) -> CapsuleFigure {
        let sk = Skeleton::new(vec![
            Joint {
                name: "a".into(),
                parent: None,
                offset: Vec3::zeros(),
            },
            Joint {
                name: "b".into(),
                parent: Some(0),
                offset: Vec3::new(0.0, 1.0, 0.0),
            },
        ])
        .unwrap();
        CapsuleFigure::new(sk, vec![r], 1.0).unwrap()
    }

    fn rest(fig: &CapsuleFigure) -> Pose {
        let n = fig.skeleton.len();
        forward_kinematics(&fig.skeleton, &vec![Mat3::identity(); n], Vec3::zeros()).unwrap()
    }

    #[test]
    fn sdf_at_joint_center_is_minus_radius() {
        let fig = one_bone(0.1);
        let pose = rest(&fig);
        assert!((analytic_sdf(&fig, &pose, &[0.0, 0.0, 0.0]) + 0.1).abs() < 1e-15);
        assert!((analytic_sdf(&fig, &pose, &[0.5, 0.5, 0.0]) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn spline_interpolates_knots() {
        let k = [0.1, 0.7, 0.3, 0.9];
        assert!((spline(&k, 0.0) - 0.1).abs() < 1e-12);
        assert!((spline(&k, 1.0 / 3.0) - 0.7).abs() < 1e-12);
        assert!((spline(&k, 1.0) - 0.9).abs() < 1e-9);
    }

    #[test]
    fn split_counts() {
        assert_eq!(train_count(8), 6);
        assert_eq!(train_count(4), 3);
        assert_eq!(train_count(1), 1);
        assert_eq!(train_count(2), 1);
    }

    #[test]
    fn zero_samples_rejected() {
        let fig = one_bone(0.1);
        assert!(sample_surface(&fig, &rest(&fig), 0, 1).is_err());
    }

    #[test]
    fn nested_capsules_starve_rejection() {
        // only the outermost of 150 nested capsules is ever accepted
        let capsules = (0..150)
            .map(|i| Capsule {
                a: Vec3::zeros(),
                b: Vec3::new(0.0, 0.1, 0.0),
                radius: 1.0 - i as f64 * 1e-4,
                joint: 1,
            })
            .collect();
        let fig = PosedFigure { capsules };
        let mut rng = seeds::stream(0, &[]);
        assert!(matches!(
            fig.sample_surface(100, &mut rng),
            Err(HipError::RejectionStarved { .. })
        ));
    }
}
