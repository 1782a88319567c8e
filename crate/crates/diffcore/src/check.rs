//! Finite-difference validation of tape gradients.

use crate::error::DiffError;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Relative errors below this magnitude floor are measured absolutely, so
/// gradients that are zero up to rounding do not blow up the ratio.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Compares `grad` of the scalar `f` at `point` against central differences
/// with step `eps`, returning the largest per-coordinate relative error
/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
///
/// Evaluation failures and non-finite values report `f64::INFINITY`.
pub fn check_grad<F>(f: F, point: &Tensor, eps: f64) -> f64
where
    F: Fn(&mut Tape, Var) -> Result<Var, DiffError>,
{
    let analytic = {
        let mut tape = Tape::new();
        let x = tape.leaf(point.clone());
        let out = match f(&mut tape, x) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        if !tape.value(out).is_finite() {
            return f64::INFINITY;
        }
        match tape.grad(out, &[x]) {
            Ok(mut g) => g.remove(0),
            Err(_) => return f64::INFINITY,
        }
    };
    let eval = |p: Tensor| -> Option<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(p);
        let out = f(&mut tape, x).ok()?;
        let v = tape.value(out).item();
        v.is_finite().then_some(v)
    };
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        let (Some(fp), Some(fm)) = (eval(plus), eval(minus)) else {
            return f64::INFINITY;
        };
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic.data()[i];
        if !a.is_finite() {
            return f64::INFINITY;
        }
        let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}
