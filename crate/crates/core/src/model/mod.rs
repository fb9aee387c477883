//! The multi-task network: encoder, latent code, decoder, metric-learning head and
//! softmax classifier, with their losses and checkpoint format.

pub mod checkpoint;
mod config;
mod loss;
mod network;
mod triplet;

pub use checkpoint::{checkpoint_load, checkpoint_load_for, checkpoint_save};
pub use config::{Min2NetConfig, FLAT_WIDTH, HIDDEN_FILTERS};
pub use loss::{cross_entropy_loss, mse_loss, total_loss, Loss, LossComponents, LOG_FLOOR};
pub use network::{Batch, DecoderTrace, EncoderTrace, ForwardTrace, HeadGrads, Min2Net};
pub use triplet::{
    check_triplet_composition, mine_triplets, triplet_loss_with, triplet_semihard_loss, LatentBatch, Triplet,
};
