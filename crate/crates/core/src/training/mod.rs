//! Losses, the training loop, and latent-code fitting and sampling.

pub mod latent;
pub mod losses;
pub mod trainer;

pub use latent::{fit_subject, sample_subject, CodeDistribution, FitConfig};
pub use losses::{Batch, CodeSource, Field, LossBreakdown, LossWeights, ModelField};
pub use trainer::{load_state, save_state, train, write_loss_csv, LossRecord, TrainConfig, TrainState, Trainer};
