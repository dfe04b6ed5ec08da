//! Dense tensors with reverse-mode gradients and the correlation-aware
//! graph and attention layers built on them.

pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{gradcheck, GradCheckReport};
pub use layers::{
    laplacian_normalize, mixing_tensor, reconstruct_keys, spatial_dynamic_weights, with_self_loops,
    AttentionOutput, Ciatt, Cignn, ContextSpec, Conv1d, LayerNorm, Linear, NormalizedAdjacency, Projection,
};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{causal_mask, Gradients, Padding, Tape, Var};
pub use tensor::Tensor;
