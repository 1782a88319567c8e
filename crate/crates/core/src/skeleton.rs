//! Joint trees, per-frame poses, forward kinematics, and the canonical frame.
//!
//! The canonical frame is y-up. Canonicalization removes the root translation
//! and the root's heading about +y, and keeps pitch and roll, so the
//! direction of gravity stays meaningful to the model.

use std::io::{Cursor, Read};
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binio::{get_f64s, get_u32, put_f64s, put_u32, read_file, write_atomic};
use crate::error::{format_err, io_err, json_err, HipError, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

const ORTHO_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
}

#[derive(Serialize, Deserialize)]
struct JointJson {
    name: String,
    parent: i64,
    offset: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct SkeletonJson {
    joints: Vec<JointJson>,
}

impl Skeleton {
    /// Joints must be listed parents-first with a single root at index 0.
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        if joints.len() < 2 {
            return Err(HipError::Skeleton(format!(
                "need at least 2 joints, got {}",
                joints.len()
            )));
        }
        for (k, j) in joints.iter().enumerate() {
            match (k, j.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err(HipError::Skeleton("joint 0 must be the root".into())),
                (_, None) => {
                    return Err(HipError::Skeleton(format!("joint {k} is a second root")))
                }
                (_, Some(p)) if p >= k => {
                    return Err(HipError::Skeleton(format!(
                        "joint {k} has parent {p}; parents must come first"
                    )))
                }
                _ => {}
            }
            if !j.offset.iter().all(|v| v.is_finite()) {
                return Err(HipError::Skeleton(format!("joint {k} has a non-finite offset")));
            }
        }
        Ok(Skeleton { joints })
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.joints[k].parent
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        self.joints.iter().map(|j| j.parent).collect()
    }

    pub fn children(&self, k: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.joints[c].parent == Some(k)).collect()
    }

    /// (parent, child) pairs, one per non-root joint, in child order.
    pub fn bones(&self) -> Vec<(usize, usize)> {
        (1..self.len()).map(|c| (self.joints[c].parent.unwrap(), c)).collect()
    }

    pub fn to_json(&self) -> String {
        let doc = SkeletonJson {
            joints: self
                .joints
                .iter()
                .map(|j| JointJson {
                    name: j.name.clone(),
                    parent: j.parent.map_or(-1, |p| p as i64),
                    offset: [j.offset.x, j.offset.y, j.offset.z],
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("skeleton serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let doc: SkeletonJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let joints = doc
            .joints
            .into_iter()
            .map(|j| {
                let parent = match j.parent {
                    -1 => Ok(None),
                    p if p >= 0 => Ok(Some(p as usize)),
                    p => Err(format!("joint {}: bad parent {p}", j.name)),
                }?;
                Ok(Joint {
                    name: j.name,
                    parent,
                    offset: Vec3::from(j.offset),
                })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        Skeleton::new(joints).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Skeleton::from_json(&text).map_err(|m| format_err(path, m))
    }

    /// Hex SHA-256 of the JSON form; checkpoints record it to catch
    /// mismatched skeletons.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }
}

/// Global joint transforms for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub transforms: Vec<RigidTransform>,
    pub frame: u32,
    pub subject: u32,
}

pub fn is_rotation(r: &Mat3) -> bool {
    let e = r.transpose() * r - Mat3::identity();
    e.iter().all(|v| v.abs() < ORTHO_TOL) && r.determinant() > 0.0
}

impl Pose {
    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn identity(n: usize) -> Self {
        Pose {
            transforms: vec![RigidTransform::identity(); n],
            frame: 0,
            subject: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, t) in self.transforms.iter().enumerate() {
            if !is_rotation(&t.rotation) || !t.translation.iter().all(|v| v.is_finite()) {
                return Err(HipError::NotOrthonormal { joint: k });
            }
        }
        Ok(())
    }

    pub fn position(&self, k: usize) -> Vec3 {
        self.transforms[k].translation
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.transforms.iter().map(|t| t.translation).collect()
    }

    /// Left-multiplies every joint transform by `g`.
    pub fn transformed(&self, g: &RigidTransform) -> Pose {
        Pose {
            transforms: self
                .transforms
                .iter()
                .map(|t| RigidTransform {
                    rotation: g.rotation * t.rotation,
                    translation: g.apply(&t.translation),
                })
                .collect(),
            frame: self.frame,
            subject: self.subject,
        }
    }
}

pub fn rot_x(a: f64) -> Mat3 {
    Rotation3::from_axis_angle(&Vec3::x_axis(), a).into_inner()
}

pub fn rot_y(a: f64) -> Mat3 {
    Rotation3::from_axis_angle(&Vec3::y_axis(), a).into_inner()
}

pub fn rot_z(a: f64) -> Mat3 {
    Rotation3::from_axis_angle(&Vec3::z_axis(), a).into_inner()
}

/// Joint k's global transform is its parent's composed with (offset_k,
/// local_k); the root sits at `offset_0 + root_translation`.
pub fn forward_kinematics(
    skeleton: &Skeleton,
    local_rotations: &[Mat3],
    root_translation: Vec3,
) -> Result<Pose> {
    if local_rotations.len() != skeleton.len() {
        return Err(HipError::Length {
            what: "local rotations",
            expected: skeleton.len(),
            got: local_rotations.len(),
        });
    }
    let mut transforms: Vec<RigidTransform> = Vec::with_capacity(skeleton.len());
    for (k, (joint, local)) in skeleton.joints().iter().zip(local_rotations).enumerate() {
        if !is_rotation(local) {
            return Err(HipError::NotOrthonormal { joint: k });
        }
        let t = match joint.parent {
            None => RigidTransform {
                rotation: *local,
                translation: joint.offset + root_translation,
            },
            Some(p) => {
                let parent = transforms[p];
                RigidTransform {
                    rotation: parent.rotation * local,
                    translation: parent.apply(&joint.offset),
                }
            }
        };
        transforms.push(t);
    }
    Ok(Pose {
        transforms,
        frame: 0,
        subject: 0,
    })
}

/// Heading of the root about +y: the yaw that carries +z onto the root's
/// forward axis projected to the ground plane. Falls back to the x axis when
/// the forward axis is (nearly) vertical.
fn root_yaw(r: &Mat3) -> f64 {
    let f = r * Vec3::z();
    if f.x.hypot(f.z) > 1e-6 {
        f.x.atan2(f.z)
    } else {
        let s = r * Vec3::x();
        (-s.z).atan2(s.x)
    }
}

pub fn canonicalize(pose: &Pose) -> Pose {
    let root = pose.transforms[0];
    let undo = rot_y(-root_yaw(&root.rotation));
    let g = RigidTransform {
        rotation: undo,
        translation: -(undo * root.translation),
    };
    let mut out = pose.transformed(&g);
    // exact zero rather than rounding residue
    out.transforms[0].translation = Vec3::zeros();
    out
}

/// Flat pose layout: per joint, the 9 rotation entries row-major followed by
/// the translation.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseVector(pub Vec<f64>);

pub const POSE_STRIDE: usize = 12;

pub fn flatten(pose: &Pose) -> PoseVector {
    let mut flat = Vec::with_capacity(POSE_STRIDE * pose.len());
    for t in &pose.transforms {
        for r in 0..3 {
            for c in 0..3 {
                flat.push(t.rotation[(r, c)]);
            }
        }
        flat.extend_from_slice(t.translation.as_slice());
    }
    PoseVector(flat)
}

pub fn unflatten(v: &[f64], frame: u32, subject: u32) -> Result<Pose> {
    if !v.len().is_multiple_of(POSE_STRIDE) || v.is_empty() {
        return Err(HipError::Length {
            what: "pose vector",
            expected: POSE_STRIDE * (v.len() / POSE_STRIDE).max(1),
            got: v.len(),
        });
    }
    let transforms = v
        .chunks_exact(POSE_STRIDE)
        .map(|b| RigidTransform {
            rotation: Mat3::from_row_slice(&b[..9]),
            translation: Vec3::new(b[9], b[10], b[11]),
        })
        .collect();
    Ok(Pose {
        transforms,
        frame,
        subject,
    })
}

pub const POSE_MAGIC: &[u8; 4] = b"HIPP";

pub fn encode_pose_stream(joints: usize, frames: &[Pose]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(POSE_MAGIC);
    put_u32(&mut out, joints as u32).unwrap();
    put_u32(&mut out, frames.len() as u32).unwrap();
    for p in frames {
        debug_assert_eq!(p.len(), joints);
        put_f64s(&mut out, &flatten(p).0).unwrap();
    }
    out
}

pub fn decode_pose_stream(bytes: &[u8], path: &Path) -> Result<Vec<Pose>> {
    let bad = |m: &str| format_err(path, m);
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != POSE_MAGIC {
        return Err(bad("not a HIPP pose stream"));
    }
    let n = get_u32(&mut r).map_err(|_| bad("truncated header"))? as usize;
    let frames = get_u32(&mut r).map_err(|_| bad("truncated header"))? as usize;
    (0..frames)
        .map(|f| {
            let v = get_f64s(&mut r, n * POSE_STRIDE).map_err(|_| bad("truncated frame"))?;
            unflatten(&v, f as u32, 0)
        })
        .collect()
}

pub fn write_pose_stream(path: &Path, joints: usize, frames: &[Pose]) -> Result<()> {
    write_atomic(path, &encode_pose_stream(joints, frames))
}

pub fn read_pose_stream(path: &Path) -> Result<Vec<Pose>> {
    decode_pose_stream(&read_file(path)?, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}
