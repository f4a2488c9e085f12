//! 8-bit quantized dense classifier: the weights both sides fight over.

mod data;
mod model;
mod tensor;
mod train;

pub use data::{Dataset, GaussianClusters, Split};
pub use model::{argmax, DenseLayer, Gradients, LossProbe, Matrix, QuantizedModel, RealLayer, RealNet};
pub use tensor::{flipped, quantize, FlipDirection, QuantizedTensor};
pub use train::{train_tiny, TrainConfig, TrainedModel};
