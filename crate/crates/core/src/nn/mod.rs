//! Dense-tensor neural core: the exact ops the CRNN needs, forward and
//! backward, with no generic autodiff.

pub mod crnn;
pub mod gru;
pub mod io;
pub mod ops;
mod tensor;

pub use crnn::{crnn_forward, CrnnConfig, CrnnModel, ForwardTrace, FrameProbs, Gradients, ModelMeta};
pub use gru::{bgru_forward, BiGru, GruDirection};
pub use io::{load_model, save_model};
pub use ops::{linear_softmax_pool, Mode};
pub use tensor::Tensor;
