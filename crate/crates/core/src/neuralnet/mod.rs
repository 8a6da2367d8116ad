//! A small 1-D convolutional classifier built from MobileNetV3 parts:
//! hard activations, squeeze-and-excitation and depthwise-separable
//! convolution, trained with softmax cross-entropy and plain SGD.

pub mod activation;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;

pub use self::activation::{h_sigmoid, h_swish};
pub use self::layers::{cross_entropy, depthwise_separable_conv, se_block, softmax};
pub use self::model::{argmax, Architecture, BlockSpec, MobileMini, ModelFile, WeightInit};
pub use self::tensor::Tensor;
pub use self::train::{train, EpochStats, Sample, TrainConfig, TrainOutcome};
