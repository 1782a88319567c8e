use diffcore::{AdamState, Tensor};
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::losses::{batch_objective, Batch, CodeSource, LossWeights};
use crate::error::{HipError, Result};
use crate::model::HipnetModel;
use crate::seeds::{self, TAG_FIT};
use crate::skeleton::PoseVector;
use crate::synthdata::OrientedCloud;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    pub lr: f64,
    /// Surface points per iteration; the whole cloud when smaller.
    pub batch_points: usize,
    pub lambda_normal: f64,
    pub seed: u64,
    pub chunk_rows: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 100,
            lr: 1e-3,
            batch_points: 2000,
            lambda_normal: 0.1,
            seed: 0,
            chunk_rows: 512,
        }
    }
}

/// Optimizes a subject code against a (possibly partial) cloud with all
/// network weights frozen. Starts from the mean of the trained codes; an
/// empty cloud returns that mean unchanged.
pub fn fit_subject(
    model: &HipnetModel,
    cloud: &OrientedCloud,
    pose: &PoseVector,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    if model.codes_index().is_none() {
        return Err(HipError::Input("model has no subject codes to fit".into()));
    }
    if cloud.labels.len() != cloud.len() {
        return Err(HipError::Input("cloud is missing joint assignments".into()));
    }
    let mut code = vec![Tensor::row(&model.mean_code())];
    if cloud.is_empty() {
        return Ok(code.remove(0).into_data());
    }
    let w = LossWeights {
        lambda_eikonal: 0.0,
        lambda_normal: config.lambda_normal,
        subnetworks: false,
    };
    let mut adam = AdamState::new(&code);
    for it in 0..config.iterations {
        let mut rng = seeds::stream(config.seed, &[TAG_FIT, it as u64]);
        let sub = if cloud.len() > config.batch_points {
            let idx = index::sample(&mut rng, cloud.len(), config.batch_points).into_vec();
            cloud.subset(&idx)
        } else {
            cloud.clone()
        };
        let batch = Batch {
            surface: sub.points,
            normals: sub.normals,
            labels: sub.labels,
            eikonal: Vec::new(),
        };
        let current = code[0].data().to_vec();
        let (loss, grads) = batch_objective(model, pose, CodeSource::Free(&current), &batch, &w, config.chunk_rows)?;
        if !loss.total.is_finite() || !grads.iter().all(Tensor::is_finite) {
            return Err(HipError::Diverged { step: it });
        }
        adam.step(&mut code, &grads, config.lr)
            .map_err(|_| HipError::Diverged { step: it })?;
    }
    Ok(code.remove(0).into_data())
}

/// Gaussian over trained subject codes, for drawing new subjects.
#[derive(Clone, Debug)]
pub struct CodeDistribution {
    pub mean: DVector<f64>,
    /// Lower Cholesky factor of the (regularized) covariance.
    pub factor: DMatrix<f64>,
}

pub const COVARIANCE_EPS: f64 = 1e-6;

impl CodeDistribution {
    pub fn fit(codes: &[Vec<f64>], eps: f64) -> Result<Self> {
        let d = codes.first().map_or(0, Vec::len);
        if codes.len() < 2 || d == 0 {
            return Err(HipError::Input("a code distribution needs at least two codes".into()));
        }
        if codes.iter().any(|c| c.len() != d) {
            return Err(HipError::Input("codes have differing widths".into()));
        }
        let n = codes.len() as f64;
        let mut mean = DVector::zeros(d);
        for c in codes {
            mean += DVector::from_column_slice(c);
        }
        mean /= n;
        let mut cov = DMatrix::<f64>::identity(d, d) * eps;
        for c in codes {
            let r = DVector::from_column_slice(c) - &mean;
            cov += &r * r.transpose() / n;
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| HipError::Input("code covariance is not positive definite".into()))?;
        Ok(CodeDistribution { mean, factor: chol.l() })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + &self.factor * z).as_slice().to_vec()
    }
}

/// Draws a new subject code from a Gaussian fitted to the model's codes.
pub fn sample_subject(model: &HipnetModel, seed: u64) -> Result<Vec<f64>> {
    if model.codes_index().is_none() {
        return Err(HipError::Input("model has no subject codes".into()));
    }
    let dist = CodeDistribution::fit(&model.codes(), COVARIANCE_EPS)?;
    Ok(dist.sample(&mut seeds::stream(seed, &[TAG_FIT, u64::MAX])))
}
