//! Trainable logit-map predictor: layers, network, augmentation, training,
//! inference and checkpoints.

pub mod augment;
pub mod checkpoint;
pub mod infer;
pub mod layers;
pub mod net;
pub mod train;

pub use augment::{augment, AugmentConfig, AugmentPlan};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use infer::{infer_volume, Inference};
pub use net::{LogitPredictor, ToyNet, ToyNetConfig};
pub use train::{samples_from_phantoms, samples_from_volume, train, EpochLog, TrainConfig, TrainSample};
