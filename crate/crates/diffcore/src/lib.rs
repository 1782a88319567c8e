//! Dense `f64` tensors, a recording tape with reverse-mode gradients that can
//! themselves be differentiated, Adam, and the `HIPW` parameter file format.
//!
//! ```
//! use diffcore::{Tape, Tensor};
//!
//! // d/dw (d/dx (w * x^2)) = 2x
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::scalar(5.0));
//! let x = tape.leaf(Tensor::scalar(2.0));
//! let xx = tape.mul(x, x).unwrap();
//! let f = tape.mul(w, xx).unwrap();
//! let dfdx = tape.grad_recorded(f, &[x]).unwrap()[0];
//! let d2 = tape.grad(dfdx, &[w]).unwrap();
//! assert_eq!(d2[0].item(), 4.0);
//! ```

mod adam;
mod backward;
mod check;
pub mod checkpoint;
mod error;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use check::{check_grad, RELATIVE_FLOOR};
pub use error::DiffError;
pub use tape::{Tape, Var};
pub use tensor::{sigmoid, softplus, Tensor};
