//! From-scratch steering CNN: layers, network, SGD training and model files.

mod layers;
mod model_io;
mod network;
mod train;

pub use layers::{
    mse_loss, relu, relu_backward, same_padding, ConvGrads, ConvLayer, DenseGrads, DenseLayer,
};
pub use model_io::{
    decode_model, encode_model, load_model, save_model, LayerHeader, ModelHeader, TrainingMeta,
    MODEL_MAGIC,
};
pub use network::{
    ForwardTrace, Gradients, Layer, NetConfig, Network, CONV_STAGES, INIT_BIAS, INIT_WEIGHT_RANGE,
};
pub use train::{
    batch_gradients, evaluate_mse, train, EpochLoss, LossCurve, Parallelism, TrainConfig,
    GRAD_CHUNK,
};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("model format error: {0}")]
    Format(String),
    #[error("model file truncated: {0}")]
    Truncated(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
