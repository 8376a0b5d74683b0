//! Dense linear algebra and layer primitives used by the classifier. All
//! arithmetic is f64 and row-major; nothing here allocates per element.

mod adam;
mod layers;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use layers::{
    attention_backward, attention_forward, conv1d_backward, conv1d_backward_weights,
    conv1d_forward, cross_entropy, cross_entropy_grad_logits, dense_backward,
    dense_softmax_forward, dropout_mask, maxpool_backward, maxpool_forward, stable_softmax,
};
pub use tensor::Tensor2;

/// Errors from shape or argument validation in the numeric layer.
#[derive(Debug, thiserror::Error)]
pub enum NumericError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("attention over an empty sequence")]
    EmptySequence,
    #[error("class label {0} out of range (expected 0 or 1)")]
    InvalidLabel(usize),
}
