//! The per-agent neural controller: network, optimizer, datasets and training.

mod adam;
mod check;
mod dataset;
mod io;
mod mlp;
mod scalar;
mod train;

pub use adam::AdamState;
pub use check::gradient_check;
pub use dataset::{build_dataset, uniform_indices, Dataset, InputLayout, TrainingSample, Trajectory, DATASET_SCHEMA};
pub use io::{load_weights, read_weights, save_weights, write_weights};
pub use mlp::{FoldedMlp, ForwardCache, Mlp, Mode, BN_EPS, BN_MOMENTUM};
pub use scalar::Real;
pub use train::{evaluate_loss, train, TrainConfig, TrainOutcome};
