//! Sequential 1-D convolutional networks with a sparse linear bottleneck,
//! trained by minibatch SGD with momentum.

mod checkpoint;
mod layers;
mod network;
mod tensor;
mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta, MAGIC, VERSION};
pub use layers::{Activation, Architecture, LayerSpec};
pub use network::{bottleneck_sparsity, fresh_tag, Cache, Dataset, DropoutMode, Network};
pub use tensor::Tensor;
pub use train::{train, History, L1Mode, TargetScaler, TrainConfig};

pub(crate) use train::{batches, diverged, Momentum};
