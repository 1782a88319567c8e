//! Adam with bias correction.

use crate::error::DiffError;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments shaped like `params`, with the usual (0.9, 0.999, 1e-8).
    pub fn new(params: &[Tensor]) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &[Tensor], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = |p: &Tensor| Tensor::new(p.shape().to_vec(), vec![0.0; p.len()]).unwrap();
        AdamState {
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            beta1,
            beta2,
            eps,
        }
    }

    /// One update in place. A non-finite gradient rejects the whole step and
    /// leaves both parameters and moments untouched.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<(), DiffError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(DiffError::ParamMismatch(format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(DiffError::ParamMismatch(format!(
                    "slot {i}: param {:?}, grad {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    self.m[i].shape()
                )));
            }
            if !g.is_finite() {
                return Err(DiffError::NonFiniteGradient(i));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step(
    state: &mut AdamState,
    params: &mut [Tensor],
    grads: &[Tensor],
    lr: f64,
) -> Result<(), DiffError> {
    state.step(params, grads, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = vec![Tensor::row(&[1.0, 1.0, 1.0])];
        let g = vec![Tensor::row(&[0.3, -20.0, 1e-3])];
        let mut st = AdamState::new(&p);
        st.step(&mut p, &g, 0.01).unwrap();
        let d: Vec<f64> = p[0].data().iter().map(|v| v - 1.0).collect();
        for (di, gi) in d.iter().zip(g[0].data()) {
            assert!((di + 0.01 * gi.signum()).abs() < 1e-7, "{di} {gi}");
        }
    }

    #[test]
    fn zero_grads_leave_params_and_decay_moments() {
        let mut p = vec![Tensor::row(&[2.0, -1.0])];
        let mut st = AdamState::new(&p);
        st.step(&mut p, &[Tensor::row(&[1.0, 1.0])], 0.1).unwrap();
        let before = p.clone();
        let m_before = st.m[0].clone();
        st.step(&mut p, &[Tensor::row(&[0.0, 0.0])], 0.1).unwrap();
        // bias-corrected m is still nonzero, so params move; with a fresh
        // state zero grads must leave params alone.
        assert!(st.m[0].data()[0].abs() < m_before.data()[0].abs());
        let mut q = before.clone();
        let mut fresh = AdamState::new(&q);
        fresh.step(&mut q, &[Tensor::row(&[0.0, 0.0])], 0.1).unwrap();
        assert_eq!(q, before);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut p = vec![Tensor::row(&[1.0])];
        let mut st = AdamState::new(&p);
        let err = st.step(&mut p, &[Tensor::row(&[f64::NAN])], 0.1).unwrap_err();
        assert!(matches!(err, DiffError::NonFiniteGradient(0)));
        assert_eq!(st.step, 0);
        assert_eq!(p[0].data(), &[1.0]);
    }

    #[test]
    fn converges_on_quadratic() {
        // f(p) = |p - c|^2, gradient 2(p - c).
        let c = [1.0, 1.0];
        let mut p = vec![Tensor::row(&[0.0, 0.0])];
        let mut st = AdamState::new(&p);
        for _ in 0..200 {
            let g: Vec<f64> = p[0].data().iter().zip(c).map(|(x, ci)| 2.0 * (x - ci)).collect();
            st.step(&mut p, &[Tensor::row(&g)], 0.1).unwrap();
        }
        let dist = p[0].data().iter().zip(c).map(|(x, ci)| (x - ci).powi(2)).sum::<f64>().sqrt();
        assert!(dist < 0.05, "{dist}");
    }
}
