//! Training loop, evaluation, cross-validation protocols, experiment orchestration and
//! latent export.

mod config;
mod cv;
mod experiment;
mod export;
mod metrics;
mod sampler;
mod schedule;
mod train;

pub use config::TrainConfig;
pub use cv::{dependent_split, loso_split, stratified_kfold, SubjectSplit, TestSessionFilter};
pub use experiment::{mean_sd, plan_folds, run_experiment, ExperimentConfig, ExperimentResult, FoldRow, Scheme, Summary};
pub use export::{export_latents, latents_csv};
pub use metrics::Metrics;
pub use sampler::stratified_batches;
pub use schedule::{PlateauSchedule, ScheduleStep};
pub use train::{evaluate, train, validation_losses, EpochRecord, LossSummary, StopReason, TrainHistory, TrainOutcome};
