//! Dense `f64` tensors with a reverse-mode tape, the layer primitives the
//! forecasting models are assembled from, and the Adam optimizer.
//!
//! ```
//! use firecast_tensor::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.variable(Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap());
//! let w = tape.constant(Tensor::new(&[2, 1], vec![3.0, 4.0]).unwrap());
//! let y = tape.matmul(x, w).unwrap();
//! let loss = tape.sum(y).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.value(y).unwrap().data(), &[11.0]);
//! assert_eq!(tape.grad(x).unwrap().unwrap(), &[3.0, 4.0]);
//! ```

mod adam;
pub mod conv;
mod error;
mod gemm;
pub mod gradcheck;
mod graph;
pub mod nn;
pub mod par;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use conv::output_dim;
pub use error::{Result, TensorError};
pub use graph::{Graph, Mode};
pub use params::{ParamEntry, ParamId, ParamStore, StatUpdate, StepOutput};
pub use tape::{gelu_scalar, sigmoid_scalar, BatchStats, Tape, Var, NORM_EPS};
pub use tensor::Tensor;
