//! The handover controller network: a 12 -> 8 encoder, one LSTM unit over
//! `[f_en, h_{t-1}]`, a softmax policy head and a scalar value head. Biases
//! are omitted throughout.

mod bptt;
pub mod checkpoint;
mod lstm;
mod tensor;
mod weights;

pub use bptt::{
    bptt_gradients, n_step_targets, Bootstrap, SegmentGradients, SegmentStep, TrajectorySegment,
};
pub use checkpoint::{load_weights, save_weights, Checkpoint, NamedTensor};
pub use lstm::{
    backward, entropy, forward, forward_input, greedy_action, sample_action, softmax, unroll,
    RecurrentState, StepCache, StepOutput, Unroll,
};
pub use tensor::Tensor;
pub use weights::{ActorCriticWeights, NetDims, Param, ParamView, ParamViewMut, Partition};
