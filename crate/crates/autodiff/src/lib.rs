//! Small dense-tensor reverse-mode automatic differentiation.
//!
//! Operations are recorded on a [`Tape`] as they run; [`Tape::backward`]
//! sweeps the tape in reverse and leaves gradients on every node that
//! depends on a `requires_grad` leaf.
//!
//! ```
//! use reorder_autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);
//! ```

mod check;
mod tape;
mod tensor;

pub use check::{grad_check, grad_check_with, GradCheck, Stencil};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} holds {} values, got {len}", shape.iter().product::<usize>())]
    Length { shape: Vec<usize>, len: usize },
    #[error("expected a single value, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    Axis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
