//! Dense tensors with reverse-mode differentiation and the value networks
//! built on them.

pub mod adam;
pub mod arch;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use arch::{ArchKind, ArchSpec, Model, SetBatch};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use params::{Gradients, ParamId, Parameters};
pub use tape::{Backward, Tape, Var};
pub use tensor::{Tensor, TensorError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{rows} rows exceed the fixed input size of {max}")]
    TooManyRows { rows: usize, max: usize },
    #[error("empty batch or set")]
    EmptySet,
    #[error("unknown architecture `{0}` (expected mlp, deepset, socialattn or midas)")]
    UnknownArch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
