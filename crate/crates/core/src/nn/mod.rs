//! Dense reverse-mode autodiff with the layers, losses and optimizer the
//! relay-placement networks are built from.

mod adam;
mod layers;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::Adam;
pub use layers::{
    frobenius_mse, global_add_pool, global_sort_pool, graph_conv, graph_size_norm, huber_loss,
    linear, mse, sort_order,
};
pub use params::{load_checkpoint, parse_checkpoint, render_checkpoint, save_checkpoint, Checkpoint, ParamSet};
pub use tape::{
    gelu, gelu_prime, grad_wrt_inputs, huber, huber_prime, sigmoid, softplus, Gradients, InputGrads,
    InputRole, LeafKind, Tape, Var,
};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("tensor of shape {shape:?} needs {} entries, got {len}", shape[0] * shape[1])]
    DataLength { shape: [usize; 2], len: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("rows have different lengths")]
    Ragged,
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("expected a scalar output, got shape {0:?}")]
    NotScalar([usize; 2]),
    #[error("row index {index} out of range for {len} rows")]
    Index { index: usize, len: usize },
    #[error("sort pool needs k <= n, got k={k}, n={n}")]
    SortPoolK { k: usize, n: usize },
    #[error("tape has no {0} input")]
    MissingInput(&'static str),
    #[error("checkpoint line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("checkpoint ended early: {0}")]
    Truncated(String),
    #[error("checkpoint is for architecture {found:?}, expected {expected:?}")]
    ArchMismatch { expected: String, found: String },
    #[error("checkpoint parameter {name:?} has shape {found:?}, expected {expected:?}")]
    ParamMismatch {
        name: String,
        expected: [usize; 2],
        found: [usize; 2],
    },
    #[error("checkpoint lists parameters {found:?}, expected {expected:?}")]
    ParamNames {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("gradient count {got} does not match {expected} parameters")]
    GradCount { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
