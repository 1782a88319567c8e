//! The hierarchical implicit model.
//!
//! A pose encoder maps the flattened joint transforms to a code φ. Each joint
//! owns a sub-network F_k(x, φ, β[, F_parent]) evaluated in skeleton order,
//! and an aggregation network fuses (x, φ, β, F_1..F_N) into the final signed
//! distance. Conditioning inputs are constant across a batch of query points,
//! so their contribution to the first and skip layers is computed once per
//! batch as a row and broadcast.

use std::path::Path;
use std::sync::Arc;

use diffcore::{checkpoint, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_atomic};
use crate::error::{format_err, HipError, Result};
use crate::geom::P3;
use crate::seeds::{self, TAG_INIT};
use crate::skeleton::{read_json, write_json, PoseVector, Skeleton, POSE_STRIDE};

pub const SOFTPLUS_BETA: f64 = 100.0;
pub const CODE_INIT_STD: f64 = 1e-4;
/// Rows per tape when evaluating without gradients.
const EVAL_CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_width: usize,
    pub hidden: usize,
    /// Number of linear layers, the output layer included.
    pub depth: usize,
    /// Layer that receives the network input a second time.
    pub skip_at: usize,
    pub output_width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub depth: usize,
    pub skip_at: usize,
    pub encoder_hidden: usize,
    pub encoder_layers: usize,
    pub d_phi: usize,
    /// Subject code width; 0 drops subject codes entirely.
    pub d_beta: usize,
    /// Feed each sub-network its parent's output.
    pub hierarchical: bool,
    pub init_radius: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 256,
            depth: 8,
            skip_at: 4,
            encoder_hidden: 256,
            encoder_layers: 4,
            d_phi: 64,
            d_beta: 256,
            hierarchical: true,
            init_radius: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HipError::Input(m.into()));
        if self.hidden == 0 || self.encoder_hidden == 0 || self.d_phi == 0 {
            return bad("widths must be positive");
        }
        if self.depth < 2 || self.skip_at == 0 || self.skip_at >= self.depth {
            return bad("skip layer must lie strictly inside (0, depth)");
        }
        if self.encoder_layers < 1 {
            return bad("encoder needs at least one layer");
        }
        Ok(())
    }

    pub fn single_subject(mut self) -> Self {
        self.d_beta = 0;
        self
    }
}

/// Parameter indices of one linear layer. `wh` multiplies the previous
/// hidden state; `wx`, `wc`, `we` multiply the query point, the conditioning
/// row, and the extra per-point inputs.
#[derive(Clone, Debug)]
struct Layer {
    wh: Option<usize>,
    wx: Option<usize>,
    wc: Option<usize>,
    we: Option<usize>,
    b: usize,
    activate: bool,
}

#[derive(Clone, Debug)]
struct Net {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: ModelConfig,
    parents: Vec<i64>,
    skeleton_hash: String,
    d_phi: usize,
    d_beta: usize,
    subjects: Vec<usize>,
    encoder: MlpSpec,
    subnetworks: Vec<MlpSpec>,
    aggregation: MlpSpec,
}

#[derive(Clone, Debug)]
pub struct HipnetModel {
    pub config: ModelConfig,
    parents: Vec<Option<usize>>,
    skeleton_hash: String,
    subjects: usize,
    names: Vec<String>,
    params: Vec<Tensor>,
    encoder: Net,
    subnets: Vec<Net>,
    aggregation: Net,
    codes: Option<usize>,
}

/// Outputs of one batched forward pass.
pub struct Forward {
    /// Final SDF, rows × 1.
    pub sdf: Var,
    /// Sub-network outputs, one rows × 1 column per joint.
    pub subs: Vec<Var>,
    /// The same outputs side by side, rows × N.
    pub sub_matrix: Var,
}

struct Builder<'a, R: Rng> {
    names: Vec<String>,
    params: Vec<Tensor>,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, R> {
    fn add(&mut self, name: String, t: Tensor) -> usize {
        self.names.push(name);
        self.params.push(t);
        self.params.len() - 1
    }

    fn normal(&mut self, rows: usize, cols: usize, mean: f64, std: f64) -> Tensor {
        let d = Normal::new(mean, std).expect("finite std");
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| d.sample(self.rng)).collect())
    }

    /// Geometric initialization: the untrained net approximates the signed
    /// distance to a sphere of radius `radius` in x. Conditioning columns
    /// listed in `zero_c` and all extra-input columns start at zero so the
    /// initial surface ignores them.
    fn sdf_net(
        &mut self,
        prefix: &str,
        inputs: [usize; 3],
        hidden: usize,
        depth: usize,
        skip_at: usize,
        radius: f64,
        zero_c: usize,
    ) -> Net {
        let [dx, dc, de] = inputs;
        let std = 2f64.sqrt() / (hidden as f64).sqrt();
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let last = l + 1 == depth;
            let out = if last { 1 } else { hidden };
            let takes_input = l == 0 || l == skip_at;
            let s = if l == skip_at { std / 2f64.sqrt() } else { std };
            let name = |p: &str| format!("{prefix}.l{l}.{p}");
            let wh = (l > 0).then(|| {
                let t = if last {
                    let m = std::f64::consts::PI.sqrt() / (hidden as f64).sqrt();
                    self.normal(hidden, out, m, 1e-5)
                } else {
                    self.normal(hidden, out, 0.0, s)
                };
                self.add(name("wh"), t)
            });
            let (mut wx, mut wc, mut we) = (None, None, None);
            if takes_input {
                wx = Some({
                    let t = if last { Tensor::zeros(dx, out) } else { self.normal(dx, out, 0.0, s) };
                    self.add(name("wx"), t)
                });
                if dc > 0 {
                    let mut t = if last { Tensor::zeros(dc, out) } else { self.normal(dc, out, 0.0, s) };
                    t.data_mut()[..zero_c * out].fill(0.0);
                    wc = Some(self.add(name("wc"), t));
                }
                if de > 0 {
                    we = Some(self.add(name("we"), Tensor::zeros(de, out)));
                }
            }
            let bias = if last { Tensor::full(1, 1, -radius) } else { Tensor::zeros(1, out) };
            let b = self.add(name("b"), bias);
            layers.push(Layer {
                wh,
                wx,
                wc,
                we,
                b,
                activate: !last,
            });
        }
        Net {
            spec: MlpSpec {
                input_width: dx + dc + de,
                hidden,
                depth,
                skip_at,
                output_width: 1,
            },
            layers,
        }
    }

    fn encoder(&mut self, input: usize, hidden: usize, layers: usize, out: usize) -> Net {
        let mut ls = Vec::with_capacity(layers);
        for l in 0..layers {
            let last = l + 1 == layers;
            let fan_in = if l == 0 { input } else { hidden };
            let width = if last { out } else { hidden };
            let gain = if last { 1.0 } else { 2.0 };
            let w = self.normal(fan_in, width, 0.0, (gain / fan_in as f64).sqrt());
            let key = if l == 0 { "wc" } else { "wh" };
            let wi = self.add(format!("encoder.l{l}.{key}"), w);
            let b = self.add(format!("encoder.l{l}.b"), Tensor::zeros(1, width));
            let (wh, wc) = if l == 0 { (None, Some(wi)) } else { (Some(wi), None) };
            ls.push(Layer {
                wh,
                wx: None,
                wc,
                we: None,
                b,
                activate: !last,
            });
        }
        Net {
            spec: MlpSpec {
                input_width: input,
                hidden,
                depth: layers,
                skip_at: 0,
                output_width: out,
            },
            layers: ls,
        }
    }
}

fn one_hot(n: usize, i: usize) -> Tensor {
    let mut t = Tensor::zeros(1, n);
    t.data_mut()[i] = 1.0;
    t
}

impl HipnetModel {
    /// Fresh model for `skeleton` with `subjects` learned codes.
    pub fn new(skeleton: &Skeleton, subjects: usize, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = skeleton.len();
        if n < 2 {
            return Err(HipError::Skeleton("need at least 2 joints".into()));
        }
        if config.d_beta > 0 && subjects == 0 {
            return Err(HipError::Input("multi-subject model needs at least one subject".into()));
        }
        let mut rng = seeds::stream(seed, &[TAG_INIT]);
        let mut b = Builder {
            names: Vec::new(),
            params: Vec::new(),
            rng: &mut rng,
        };
        let c = &config;
        let dc = c.d_phi + c.d_beta;
        let encoder = b.encoder(POSE_STRIDE * n, c.encoder_hidden, c.encoder_layers, c.d_phi);
        let parents = skeleton.parents();
        let subnets = (0..n)
            .map(|k| {
                let de = usize::from(c.hierarchical && parents[k].is_some());
                b.sdf_net(&format!("sub{k}"), [3, dc, de], c.hidden, c.depth, c.skip_at, c.init_radius, c.d_phi)
            })
            .collect();
        let aggregation = b.sdf_net("agg", [3, dc, n], c.hidden, c.depth, c.skip_at, c.init_radius, c.d_phi);
        let codes = (c.d_beta > 0).then(|| {
            let t = b.normal(subjects, c.d_beta, 0.0, CODE_INIT_STD);
            b.add("codes".into(), t)
        });
        let Builder { names, params, .. } = b;
        let subjects = if c.d_beta > 0 { subjects } else { 0 };
        Ok(HipnetModel {
            config,
            parents,
            skeleton_hash: skeleton.hash(),
            subjects,
            names,
            params,
            encoder,
            subnets,
            aggregation,
            codes,
        })
    }

    pub fn joints(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn subjects(&self) -> usize {
        self.subjects
    }

    pub fn skeleton_hash(&self) -> &str {
        &self.skeleton_hash
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn codes_index(&self) -> Option<usize> {
        self.codes
    }

    pub fn encoder_spec(&self) -> &MlpSpec {
        &self.encoder.spec
    }

    pub fn subnetwork_spec(&self, k: usize) -> &MlpSpec {
        &self.subnets[k].spec
    }

    pub fn aggregation_spec(&self) -> &MlpSpec {
        &self.aggregation.spec
    }

    /// Parameter indices belonging to sub-network `k`.
    pub fn subnetwork_params(&self, k: usize) -> Vec<usize> {
        let prefix = format!("sub{k}.");
        (0..self.names.len()).filter(|&i| self.names[i].starts_with(&prefix)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn code(&self, subject: usize) -> Result<Vec<f64>> {
        match self.codes {
            None => Ok(Vec::new()),
            Some(ci) => {
                if subject >= self.subjects {
                    return Err(HipError::UnknownSubject {
                        id: subject,
                        known: (0..self.subjects).collect(),
                    });
                }
                Ok(self.params[ci].row_slice(subject).to_vec())
            }
        }
    }

    pub fn set_code(&mut self, subject: usize, code: &[f64]) -> Result<()> {
        let ci = self.codes.ok_or_else(|| HipError::Input("model has no subject codes".into()))?;
        if subject >= self.subjects || code.len() != self.config.d_beta {
            return Err(HipError::Input("code index or width out of range".into()));
        }
        let d = self.config.d_beta;
        self.params[ci].data_mut()[subject * d..(subject + 1) * d].copy_from_slice(code);
        Ok(())
    }

    pub fn codes(&self) -> Vec<Vec<f64>> {
        (0..self.subjects).map(|s| self.code(s).unwrap()).collect()
    }

    pub fn mean_code(&self) -> Vec<f64> {
        let d = self.config.d_beta;
        let mut m = vec![0.0; d];
        for s in 0..self.subjects {
            for (a, v) in m.iter_mut().zip(self.code(s).unwrap()) {
                *a += v / self.subjects as f64;
            }
        }
        m
    }

    /// Shares parameter buffers so several tapes can bind them cheaply.
    pub fn shared_params(&self) -> Vec<Arc<Tensor>> {
        self.params.iter().map(|t| Arc::new(t.clone())).collect()
    }

    pub fn bind(&self, tape: &mut Tape, shared: &[Arc<Tensor>]) -> Vec<Var> {
        shared.iter().map(|t| tape.leaf_shared(Arc::clone(t))).collect()
    }

    fn run(&self, tape: &mut Tape, p: &[Var], net: &Net, x: Option<Var>, cond: Option<Var>, extra: Option<Var>) -> Result<Var> {
        let mut h: Option<Var> = None;
        for layer in &net.layers {
            let mut acc: Option<Var> = None;
            let mut add = |tape: &mut Tape, v: Var| -> Result<()> {
                acc = Some(match acc {
                    None => v,
                    Some(a) => tape.add(a, v)?,
                });
                Ok(())
            };
            if let (Some(w), Some(hv)) = (layer.wh, h) {
                let v = tape.matmul(hv, p[w])?;
                add(tape, v)?;
            }
            if let (Some(w), Some(xv)) = (layer.wx, x) {
                let v = tape.matmul(xv, p[w])?;
                add(tape, v)?;
            }
            if let (Some(w), Some(ev)) = (layer.we, extra) {
                let v = tape.matmul(ev, p[w])?;
                add(tape, v)?;
            }
            let mut row = p[layer.b];
            if let (Some(w), Some(cv)) = (layer.wc, cond) {
                let cw = tape.matmul(cv, p[w])?;
                row = tape.add(cw, row)?;
            }
            let pre = match acc {
                Some(a) => tape.add_row(a, row)?,
                None => row,
            };
            h = Some(if layer.activate {
                tape.softplus(pre, SOFTPLUS_BETA)?
            } else {
                pre
            });
        }
        Ok(h.expect("nets have at least one layer"))
    }

    /// φ for a flattened pose, as a 1 × d_φ row on `tape`.
    pub fn encode_on(&self, tape: &mut Tape, p: &[Var], pose: &PoseVector) -> Result<Var> {
        let want = POSE_STRIDE * self.joints();
        if pose.0.len() != want {
            return Err(HipError::Length {
                what: "pose vector",
                expected: want,
                got: pose.0.len(),
            });
        }
        let input = tape.leaf(Tensor::row(&pose.0));
        self.run(tape, p, &self.encoder, None, Some(input), None)
    }

    /// Subject `s`'s code as a 1 × d_β row selected out of the code table
    /// (so gradients reach the table), or `None` without codes.
    pub fn code_on(&self, tape: &mut Tape, p: &[Var], subject: usize) -> Result<Option<Var>> {
        match self.codes {
            None => Ok(None),
            Some(ci) => {
                if subject >= self.subjects {
                    return Err(HipError::UnknownSubject {
                        id: subject,
                        known: (0..self.subjects).collect(),
                    });
                }
                let sel = tape.leaf(one_hot(self.subjects, subject));
                Ok(Some(tape.matmul(sel, p[ci])?))
            }
        }
    }

    /// Conditioning row (φ, β).
    pub fn cond_on(&self, tape: &mut Tape, phi: Var, beta: Option<Var>) -> Result<Var> {
        match beta {
            Some(b) if self.config.d_beta > 0 => Ok(tape.concat_cols(phi, b)?),
            _ => Ok(phi),
        }
    }

    /// Batched evaluation of every sub-network and the aggregation network
    /// at the rows of `x` (rows × 3).
    pub fn forward_on(&self, tape: &mut Tape, p: &[Var], x: Var, cond: Var) -> Result<Forward> {
        let mut subs: Vec<Var> = Vec::with_capacity(self.joints());
        for (k, net) in self.subnets.iter().enumerate() {
            let extra = match self.parents[k] {
                Some(par) if self.config.hierarchical => Some(subs[par]),
                _ => None,
            };
            subs.push(self.run(tape, p, net, Some(x), Some(cond), extra)?);
        }
        let mut sub_matrix = subs[0];
        for &s in &subs[1..] {
            sub_matrix = tape.concat_cols(sub_matrix, s)?;
        }
        let sdf = self.run(tape, p, &self.aggregation, Some(x), Some(cond), Some(sub_matrix))?;
        Ok(Forward {
            sdf,
            subs,
            sub_matrix,
        })
    }

    fn check_code(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.config.d_beta {
            return Err(HipError::Length {
                what: "subject code",
                expected: self.config.d_beta,
                got: beta.len(),
            });
        }
        Ok(())
    }

    pub fn encode_pose(&self, pose: &PoseVector) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, &self.shared_params());
        let phi = self.encode_on(&mut tape, &p, pose)?;
        Ok(tape.value(phi).data().to_vec())
    }

    fn eval_chunks<T>(
        &self,
        points: &[P3],
        pose: &PoseVector,
        beta: &[f64],
        pick: impl Fn(&Tape, &Forward) -> T + Sync,
    ) -> Result<Vec<T>>
    where
        T: Send,
    {
        self.check_code(beta)?;
        let shared = self.shared_params();
        // φ is identical for every chunk
        let phi = self.encode_pose(pose)?;
        points
            .par_chunks(EVAL_CHUNK)
            .map(|chunk| {
                let mut tape = Tape::new();
                let p = self.bind(&mut tape, &shared);
                let phi_v = tape.leaf(Tensor::row(&phi));
                let beta_v = (!beta.is_empty()).then(|| tape.leaf(Tensor::row(beta)));
                let cond = self.cond_on(&mut tape, phi_v, beta_v)?;
                let x = tape.leaf(Tensor::matrix(chunk.len(), 3, chunk.as_flattened().to_vec()));
                let f = self.forward_on(&mut tape, &p, x, cond)?;
                Ok(pick(&tape, &f))
            })
            .collect()
    }

    /// F at each point for the given pose and subject code.
    pub fn eval_sdf(&self, points: &[P3], pose: &PoseVector, beta: &[f64]) -> Result<Vec<f64>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let parts = self.eval_chunks(points, pose, beta, |t, f| t.value(f.sdf).data().to_vec())?;
        Ok(parts.concat())
    }

    /// F_k at each point; result is indexed `[point][joint]`.
    pub fn eval_subnetworks(&self, points: &[P3], pose: &PoseVector, beta: &[f64]) -> Result<Vec<Vec<f64>>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let n = self.joints();
        let parts = self.eval_chunks(points, pose, beta, |t, f| {
            t.value(f.sub_matrix)
                .data()
                .chunks(n)
                .map(<[f64]>::to_vec)
                .collect::<Vec<_>>()
        })?;
        Ok(parts.concat())
    }

    /// ∇_x F at each point.
    pub fn eval_gradient(&self, points: &[P3], pose: &PoseVector, beta: &[f64]) -> Result<Vec<P3>> {
        self.check_code(beta)?;
        let shared = self.shared_params();
        let phi = self.encode_pose(pose)?;
        let parts = points
            .par_chunks(EVAL_CHUNK)
            .map(|chunk| -> Result<Vec<P3>> {
                let mut tape = Tape::new();
                let p = self.bind(&mut tape, &shared);
                let phi_v = tape.leaf(Tensor::row(&phi));
                let beta_v = (!beta.is_empty()).then(|| tape.leaf(Tensor::row(beta)));
                let cond = self.cond_on(&mut tape, phi_v, beta_v)?;
                let x = tape.leaf(Tensor::matrix(chunk.len(), 3, chunk.as_flattened().to_vec()));
                let f = self.forward_on(&mut tape, &p, x, cond)?;
                let s = tape.sum(f.sdf)?;
                let g = tape.grad(s, &[x])?.remove(0);
                Ok(g.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.concat())
    }

    pub fn save(&self, path: &Path, subject_ids: &[usize]) -> Result<()> {
        let entries: Vec<(String, Tensor)> = self.names.iter().cloned().zip(self.params.iter().cloned()).collect();
        let mut bytes = Vec::new();
        checkpoint::write_params(&mut bytes, &entries)?;
        write_atomic(path, &bytes)?;
        let sidecar = Sidecar {
            config: self.config.clone(),
            parents: self.parents.iter().map(|p| p.map_or(-1, |v| v as i64)).collect(),
            skeleton_hash: self.skeleton_hash.clone(),
            d_phi: self.config.d_phi,
            d_beta: self.config.d_beta,
            subjects: subject_ids.to_vec(),
            encoder: self.encoder.spec.clone(),
            subnetworks: self.subnets.iter().map(|n| n.spec.clone()).collect(),
            aggregation: self.aggregation.spec.clone(),
        };
        write_json(&sidecar_path(path), &sidecar)
    }

    /// Loads a checkpoint written by [`HipnetModel::save`]. Returns the model
    /// and the subject-id table.
    pub fn load(path: &Path, skeleton: &Skeleton) -> Result<(Self, Vec<usize>)> {
        let sidecar: Sidecar = read_json(&sidecar_path(path))?;
        if sidecar.skeleton_hash != skeleton.hash() {
            return Err(format_err(path, "checkpoint was trained on a different skeleton"));
        }
        let entries = checkpoint::read_params(&read_file(path)?[..])?;
        let mut model = HipnetModel::new(skeleton, sidecar.subjects.len(), sidecar.config.clone(), 0)?;
        if entries.len() != model.params.len() {
            return Err(format_err(path, "parameter count does not match the recorded architecture"));
        }
        for ((name, t), (want, slot)) in entries.into_iter().zip(model.names.iter().zip(model.params.iter_mut())) {
            if &name != want || t.shape() != slot.shape() {
                return Err(format_err(path, format!("unexpected parameter {name}")));
            }
            *slot = t;
        }
        Ok((model, sidecar.subjects))
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}
