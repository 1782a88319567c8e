//! Loss terms, in two forms: plain functions of field values and gradients
//! (usable with any field, including the analytic oracle), and a recorded
//! form on a tape whose parameter gradients drive training.

use std::sync::Arc;

use diffcore::{Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HipError, Result};
use crate::geom::P3;
use crate::model::HipnetModel;
use crate::skeleton::PoseVector;
use crate::synthdata::{OrientedCloud, PosedFigure};

/// The canonical box used for uniform Eikonal samples.
pub const EIKONAL_BOX: f64 = 1.0;

/// Weights and switches of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_eikonal: f64,
    pub lambda_normal: f64,
    pub subnetworks: bool,
}

/// Every component of one evaluation of the objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub surface: f64,
    pub normal: f64,
    pub eikonal: f64,
    pub surface_k: Vec<f64>,
    pub normal_k: Vec<f64>,
    pub total: f64,
}

impl LossBreakdown {
    /// surface + λe·eikonal + λn·normal + Σ_k (surface_k + λn·normal_k).
    pub fn recombine(&self, w: &LossWeights) -> f64 {
        let subs: f64 = self
            .surface_k
            .iter()
            .zip(&self.normal_k)
            .map(|(s, n)| s + w.lambda_normal * n)
            .sum();
        self.surface + w.lambda_eikonal * self.eikonal + w.lambda_normal * self.normal + subs
    }
}

/// Something with a value and a spatial gradient at any point.
pub trait Field {
    fn values_and_gradients(&self, points: &[P3]) -> Result<(Vec<f64>, Vec<P3>)>;
}

impl Field for PosedFigure {
    fn values_and_gradients(&self, points: &[P3]) -> Result<(Vec<f64>, Vec<P3>)> {
        Ok((
            self.sdf_batch(points),
            points
                .iter()
                .map(|p| {
                    let g = self.gradient(p);
                    [g.x, g.y, g.z]
                })
                .collect(),
        ))
    }
}

/// `factor` times another field.
pub struct Scaled<'a, F: Field>(pub &'a F, pub f64);

impl<F: Field> Field for Scaled<'_, F> {
    fn values_and_gradients(&self, points: &[P3]) -> Result<(Vec<f64>, Vec<P3>)> {
        let (v, g) = self.0.values_and_gradients(points)?;
        Ok((
            v.into_iter().map(|x| x * self.1).collect(),
            g.into_iter().map(|x| x.map(|c| c * self.1)).collect(),
        ))
    }
}

/// The model's SDF for one pose and subject code.
pub struct ModelField<'a> {
    pub model: &'a HipnetModel,
    pub pose: PoseVector,
    pub code: Vec<f64>,
}

impl Field for ModelField<'_> {
    fn values_and_gradients(&self, points: &[P3]) -> Result<(Vec<f64>, Vec<P3>)> {
        Ok((
            self.model.eval_sdf(points, &self.pose, &self.code)?,
            self.model.eval_gradient(points, &self.pose, &self.code)?,
        ))
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn mean(it: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        it.sum::<f64>() / n as f64
    }
}

/// Mean |F|.
pub fn surface_term(values: &[f64]) -> f64 {
    mean(values.iter().map(|v| v.abs()), values.len())
}

/// Mean ‖∇F − n‖.
pub fn normal_term(grads: &[P3], normals: &[P3]) -> f64 {
    mean(
        grads
            .iter()
            .zip(normals)
            .map(|(g, n)| norm3([g[0] - n[0], g[1] - n[1], g[2] - n[2]])),
        grads.len(),
    )
}

/// Mean (‖∇F‖ − 1)².
pub fn eikonal_term(grads: &[P3]) -> f64 {
    mean(grads.iter().map(|g| (norm3(*g) - 1.0).powi(2)), grads.len())
}

pub fn surface_loss(field: &impl Field, cloud: &OrientedCloud) -> Result<f64> {
    if cloud.is_empty() {
        return Err(HipError::Input("surface loss needs a nonempty cloud".into()));
    }
    Ok(surface_term(&field.values_and_gradients(&cloud.points)?.0))
}

pub fn normal_loss(field: &impl Field, cloud: &OrientedCloud) -> Result<f64> {
    if cloud.is_empty() {
        return Err(HipError::Input("normal loss needs a nonempty cloud".into()));
    }
    let (_, g) = field.values_and_gradients(&cloud.points)?;
    Ok(normal_term(&g, &cloud.normals))
}

pub fn eikonal_loss(field: &impl Field, points: &[P3]) -> Result<f64> {
    Ok(eikonal_term(&field.values_and_gradients(points)?.1))
}

/// Half uniform in the canonical box, half surface points jittered by an
/// isotropic Gaussian of width `sigma`.
pub fn eikonal_points(surface: &[P3], count: usize, sigma: f64, rng: &mut impl Rng) -> Vec<P3> {
    let uniform = count / 2;
    let mut out = Vec::with_capacity(count);
    for _ in 0..uniform {
        out.push([0; 3].map(|_| EIKONAL_BOX * (2.0 * rng.random::<f64>() - 1.0)));
    }
    let noise = Normal::new(0.0, sigma).expect("sigma is finite");
    for _ in uniform..count {
        if surface.is_empty() {
            out.push([0; 3].map(|_| EIKONAL_BOX * (2.0 * rng.random::<f64>() - 1.0)));
            continue;
        }
        let p = surface[rng.random_range(0..surface.len())];
        out.push(p.map(|c| c + noise.sample(rng)));
    }
    out
}

/// Per-joint (surface_k, normal_k) for fields F_k given as `values[i][k]`
/// and `grads[i][k]`. Joints without points score zero.
pub fn subnetwork_terms(
    values: &[Vec<f64>],
    grads: &[Vec<P3>],
    normals: &[P3],
    labels: &[u16],
    joints: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut s = vec![0.0; joints];
    let mut n = vec![0.0; joints];
    let mut c = vec![0usize; joints];
    for (i, &l) in labels.iter().enumerate() {
        let k = l as usize;
        if k >= joints {
            return Err(HipError::Input(format!("label {k} out of range for {joints} joints")));
        }
        let g = grads[i][k];
        let nv = normals[i];
        s[k] += values[i][k].abs();
        n[k] += norm3([g[0] - nv[0], g[1] - nv[1], g[2] - nv[2]]);
        c[k] += 1;
    }
    for k in 0..joints {
        if c[k] > 0 {
            s[k] /= c[k] as f64;
            n[k] /= c[k] as f64;
        }
    }
    Ok((s, n))
}

/// Sub-network losses of the model on a labelled cloud.
pub fn subnetwork_losses(
    model: &HipnetModel,
    pose: &PoseVector,
    code: &[f64],
    cloud: &OrientedCloud,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = model.joints();
    if let Some(&bad) = cloud.labels.iter().find(|&&l| l as usize >= n) {
        return Err(HipError::Input(format!("label {bad} out of range for {n} joints")));
    }
    let values = model.eval_subnetworks(&cloud.points, pose, code)?;
    let grads = subnetwork_gradients(model, pose, code, &cloud.points, &cloud.labels)?;
    let per_point: Vec<Vec<P3>> = grads
        .iter()
        .zip(&cloud.labels)
        .map(|(g, &l)| {
            let mut row = vec![[0.0; 3]; n];
            row[l as usize] = *g;
            row
        })
        .collect();
    subnetwork_terms(&values, &per_point, &cloud.normals, &cloud.labels, n)
}

/// ∇_x F_{label(i)} at each point.
fn subnetwork_gradients(
    model: &HipnetModel,
    pose: &PoseVector,
    code: &[f64],
    points: &[P3],
    labels: &[u16],
) -> Result<Vec<P3>> {
    let shared = model.shared_params();
    let n = model.joints();
    let mut out = Vec::with_capacity(points.len());
    for (pts, lab) in points.chunks(512).zip(labels.chunks(512)) {
        let mut tape = Tape::new();
        let p = model.bind(&mut tape, &shared);
        let phi = model.encode_on(&mut tape, &p, pose)?;
        let beta = (!code.is_empty()).then(|| tape.leaf(Tensor::row(code)));
        let cond = model.cond_on(&mut tape, phi, beta)?;
        let x = tape.leaf(Tensor::matrix(pts.len(), 3, pts.as_flattened().to_vec()));
        let f = model.forward_on(&mut tape, &p, x, cond)?;
        let sel = tape.leaf(one_hot_rows(lab, n));
        let picked = tape.mul(f.sub_matrix, sel)?;
        let s = tape.sum(picked)?;
        let g = tape.grad(s, &[x])?.remove(0);
        out.extend(g.data().chunks(3).map(|c| [c[0], c[1], c[2]]));
    }
    Ok(out)
}

pub(crate) fn one_hot_rows(labels: &[u16], n: usize) -> Tensor {
    let mut t = Tensor::zeros(labels.len(), n);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * n + l as usize] = 1.0;
    }
    t
}

/// Where the subject code comes from during a recorded evaluation.
#[derive(Clone, Copy, Debug)]
pub enum CodeSource<'a> {
    /// Row of the model's code table (gradients reach the table).
    Table(usize),
    /// A free code; its gradient is returned as the last entry.
    Free(&'a [f64]),
    /// No subject conditioning.
    None,
}

/// Unnormalized sums accumulated over the chunks of one batch.
#[derive(Clone, Debug, Default)]
pub(crate) struct Sums {
    pub surface: f64,
    pub normal: f64,
    pub eikonal: f64,
    pub surface_k: Vec<f64>,
    pub normal_k: Vec<f64>,
    pub objective: f64,
}

/// Global normalizers for one batch.
#[derive(Clone, Debug)]
pub(crate) struct Norms {
    pub surface: usize,
    pub eikonal: usize,
    pub per_joint: Vec<usize>,
}

pub(crate) enum Chunk<'a> {
    Surface {
        points: &'a [P3],
        normals: &'a [P3],
        labels: &'a [u16],
    },
    Eikonal {
        points: &'a [P3],
    },
}

pub(crate) struct ChunkResult {
    pub sums: Sums,
    pub grads: Vec<Tensor>,
}

/// Records the objective restricted to one chunk, normalized by the whole
/// batch's counts, and differentiates it with respect to all parameters (or
/// only the free code).
pub(crate) fn chunk_objective(
    model: &HipnetModel,
    shared: &[Arc<Tensor>],
    pose: &PoseVector,
    code: CodeSource,
    chunk: &Chunk,
    w: &LossWeights,
    norms: &Norms,
) -> Result<ChunkResult> {
    let n = model.joints();
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, shared);
    let phi = model.encode_on(&mut tape, &p, pose)?;
    let (beta, free) = match code {
        CodeSource::Table(s) => (model.code_on(&mut tape, &p, s)?, None),
        CodeSource::Free(c) => {
            let v = tape.leaf(Tensor::row(c));
            (Some(v), Some(v))
        }
        CodeSource::None => (None, None),
    };
    let cond = model.cond_on(&mut tape, phi, beta)?;
    let pts = match chunk {
        Chunk::Surface { points, .. } | Chunk::Eikonal { points } => *points,
    };
    let rows = pts.len();
    let x = tape.leaf(Tensor::matrix(rows, 3, pts.as_flattened().to_vec()));
    let f = model.forward_on(&mut tape, &p, x, cond)?;
    let s = tape.sum(f.sdf)?;
    let g = tape.grad_recorded(s, &[x])?[0];
    let mut sums = Sums {
        surface_k: vec![0.0; n],
        normal_k: vec![0.0; n],
        ..Sums::default()
    };
    let mut terms: Vec<(Var, f64)> = Vec::new();
    match chunk {
        Chunk::Eikonal { .. } => {
            let len = tape.row_norm(g)?;
            let dev = tape.affine(len, 1.0, -1.0)?;
            let sq = tape.mul(dev, dev)?;
            let e = tape.sum(sq)?;
            sums.eikonal = tape.value(e).item();
            terms.push((e, w.lambda_eikonal / norms.eikonal as f64));
        }
        Chunk::Surface { normals, labels, .. } => {
            let nv = tape.leaf(Tensor::matrix(rows, 3, normals.as_flattened().to_vec()));
            let a = tape.abs(f.sdf)?;
            let sa = tape.sum(a)?;
            let d = tape.sub(g, nv)?;
            let dn = tape.row_norm(d)?;
            let sn = tape.sum(dn)?;
            sums.surface = tape.value(sa).item();
            sums.normal = tape.value(sn).item();
            let ns = norms.surface as f64;
            terms.push((sa, 1.0 / ns));
            terms.push((sn, w.lambda_normal / ns));
            if w.subnetworks {
                let sel = tape.leaf(one_hot_rows(labels, n));
                let picked = tape.mul(f.sub_matrix, sel)?;
                let fk = tape.row_sum(picked)?;
                let sk = tape.sum(fk)?;
                let gk = tape.grad_recorded(sk, &[x])?[0];
                let inv: Vec<f64> = labels
                    .iter()
                    .map(|&l| 1.0 / norms.per_joint[l as usize] as f64)
                    .collect();
                let wk = tape.leaf(Tensor::matrix(rows, 1, inv));
                let ak = tape.abs(fk)?;
                let ak_w = tape.mul(ak, wk)?;
                let sak = tape.sum(ak_w)?;
                let dk = tape.sub(gk, nv)?;
                let dnk = tape.row_norm(dk)?;
                let dnk_w = tape.mul(dnk, wk)?;
                let snk = tape.sum(dnk_w)?;
                terms.push((sak, 1.0));
                terms.push((snk, w.lambda_normal));
                let (av, dv) = (tape.value(ak).data(), tape.value(dnk).data());
                for (i, &l) in labels.iter().enumerate() {
                    sums.surface_k[l as usize] += av[i];
                    sums.normal_k[l as usize] += dv[i];
                }
            }
        }
    }
    let mut total: Option<Var> = None;
    for (v, c) in terms {
        let scaled = tape.scale(v, c)?;
        total = Some(match total {
            None => scaled,
            Some(t) => tape.add(t, scaled)?,
        });
    }
    let total = total.expect("every chunk contributes a term");
    sums.objective = tape.value(total).item();
    let grads = match free {
        Some(b) => tape.grad(total, &[b])?,
        None => tape.grad(total, &p)?,
    };
    Ok(ChunkResult { sums, grads })
}

/// One batch: surface rows with normals and labels, and Eikonal rows.
#[derive(Clone, Debug)]
pub struct Batch {
    pub surface: Vec<P3>,
    pub normals: Vec<P3>,
    pub labels: Vec<u16>,
    pub eikonal: Vec<P3>,
}

/// Objective and gradients over a whole batch. Chunks are reduced in their
/// fixed order (surface chunks first), so the result does not depend on how
/// many threads evaluated them.
pub fn batch_objective(
    model: &HipnetModel,
    pose: &PoseVector,
    code: CodeSource,
    batch: &Batch,
    w: &LossWeights,
    chunk_rows: usize,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    use rayon::prelude::*;
    let n = model.joints();
    let mut per_joint = vec![0usize; n];
    for &l in &batch.labels {
        if l as usize >= n {
            return Err(HipError::Input(format!("label {l} out of range for {n} joints")));
        }
        per_joint[l as usize] += 1;
    }
    let norms = Norms {
        surface: batch.surface.len(),
        eikonal: batch.eikonal.len(),
        per_joint,
    };
    let rows = chunk_rows.max(1);
    let mut chunks: Vec<Chunk> = Vec::new();
    for start in (0..batch.surface.len()).step_by(rows) {
        let end = (start + rows).min(batch.surface.len());
        chunks.push(Chunk::Surface {
            points: &batch.surface[start..end],
            normals: &batch.normals[start..end],
            labels: &batch.labels[start..end],
        });
    }
    if w.lambda_eikonal != 0.0 {
        for c in batch.eikonal.chunks(rows) {
            chunks.push(Chunk::Eikonal { points: c });
        }
    }
    let shared = model.shared_params();
    let results = chunks
        .par_iter()
        .map(|c| chunk_objective(model, &shared, pose, code, c, w, &norms))
        .collect::<Result<Vec<_>>>()?;
    let mut sums = Sums {
        surface_k: vec![0.0; n],
        normal_k: vec![0.0; n],
        ..Sums::default()
    };
    let mut grads: Option<Vec<Tensor>> = None;
    for r in results {
        sums.surface += r.sums.surface;
        sums.normal += r.sums.normal;
        sums.eikonal += r.sums.eikonal;
        for k in 0..n {
            sums.surface_k[k] += r.sums.surface_k[k];
            sums.normal_k[k] += r.sums.normal_k[k];
        }
        sums.objective += r.sums.objective;
        grads = Some(match grads {
            None => r.grads,
            Some(mut acc) => {
                for (a, g) in acc.iter_mut().zip(&r.grads) {
                    for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
                acc
            }
        });
    }
    let div = |v: f64, c: usize| if c == 0 { 0.0 } else { v / c as f64 };
    let breakdown = LossBreakdown {
        surface: div(sums.surface, norms.surface),
        normal: div(sums.normal, norms.surface),
        eikonal: if w.lambda_eikonal != 0.0 { div(sums.eikonal, norms.eikonal) } else { 0.0 },
        surface_k: (0..n).map(|k| div(sums.surface_k[k], norms.per_joint[k])).collect(),
        normal_k: (0..n).map(|k| div(sums.normal_k[k], norms.per_joint[k])).collect(),
        total: sums.objective,
    };
    Ok((breakdown, grads.unwrap_or_default()))
}
