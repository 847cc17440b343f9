//! InfoGAN: latent codes, generator, shared discriminator/recognizer, the
//! adversarial and information losses, training, and Q-posterior
//! classification.

pub mod checkpoint;
pub mod classify;
pub mod gradcheck;
pub mod latent;
pub mod loss;
pub mod model;
pub mod train;

pub use checkpoint::{GanCheckpoint, FORMAT_VERSION};
pub use classify::{classify, generate, sample_grid, ClusterAssignment};
pub use latent::{codes_to_tensor, sample_latent, LatentCode, LatentSpec};
pub use loss::{loss_discriminator, loss_generator_q, DiscLoss, GqLoss, GqParts};
pub use model::{DiscQOutput, DiscriminatorQ, Generator, NetConfig};
pub use train::{train, train_with, EpochLog, TrainConfig, CHECKPOINT_FILE, LOSS_LOG_FILE};
