//! Message-passing layers, model assembly and checkpoints.

mod conv;
mod model;
mod params;
pub mod reference;
mod spec;

pub use conv::{
    edgeconv_forward, gatv2_attention, gatv2_forward, linear_forward, rgcn_forward, sage_forward,
    Arcs, EdgeConvWeights, GatWeights, RgcnWeights, SageWeights, GAT_NEGATIVE_SLOPE,
};
pub use model::{
    mlp_baseline_forward, mlp_baseline_tape, model_forward, GraphInput, Model, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use params::{init_weights, param_layout, Bound, ParamShape, Params};
pub use spec::{
    Activation, HeteroWeightMap, LayerKind, LayerSpec, MlpBaselineSpec, ModelSpec, WeightSharing,
    DEFAULT_DROPOUT, DEFAULT_HEADS, DEFAULT_HIDDEN, DEFAULT_NUM_CLASSES,
};
