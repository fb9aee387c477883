//! Dataset containers and on-disk formats, synthetic data, augmentations and class balancing.

mod augment;
mod dataset;
pub mod io;
pub mod raw;
mod synth;

pub use augment::{
    augment_jitter, augment_magwarp, augment_one, augment_permute, augment_pool, augment_scale, augment_timewarp,
    balance_rest, AugmentConfig, AugmentKind,
};
pub use dataset::{EpochedDataset, SessionKind, SessionTag};
pub use io::{read_dataset, read_manifest, read_subject, write_dataset, DatasetManifest, SubjectEntry};
pub use raw::{
    read_raw_entry, read_raw_manifest, read_raw_recording, write_raw_dir, write_raw_recording, EventClass, RawEntry,
    RawManifest,
};
pub use synth::{synth_generate, SynthSpec};
