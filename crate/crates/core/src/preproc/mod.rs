//! Signal path from continuous recordings to trials: Butterworth band-pass in second-order
//! sections, zero-phase filtering, rational resampling, channel selection and epoching.

mod filter;
mod pipeline;
mod recording;
mod resample;

pub use filter::{butter_bandpass, filtfilt, Biquad, BiquadCascade, FilterSpec};
pub use pipeline::{preprocess_pipeline, PipelineSpec};
pub use recording::{epoch, epoch_with_rest, select_channels, Event, RawRecording, RestWindow, Window};
pub use resample::{rational_ratio, resample, Resampler};
