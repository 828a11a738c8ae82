//! From-scratch differentiable core: tensors, a reverse-mode tape, the
//! multi-view attention model, the classifier head, and Adam.

mod adam;
mod checkpoint;
mod model;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{
    checkpoint_header, config_from_header, load_checkpoint, save_checkpoint,
    validate_header_against, ARCH_KEYS,
};
pub use model::{
    attention_head, build_fused, collect_grads, head_forward, mvsa, pad_adjacency,
    register_params, sample_probability, AblationMask, CssInput, ModelParams, PaddedView,
    ParamVars, SampleInput, VIEW_NAMES,
};
pub use tape::{ce_loss, Graph, VarId, PROB_CLAMP};
pub use tensor::{matmul, matmul_nt, matmul_tn, Tensor};
