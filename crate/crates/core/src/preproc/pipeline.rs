use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{butter_bandpass, epoch_with_rest, filtfilt, select_channels, Event, FilterSpec, RawRecording, Resampler, RestWindow, Window};
use crate::dataio::EpochedDataset;
use crate::error::Result;

/// Settings for turning a continuous recording into model-ready trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub target_fs: f64,
    /// Channel subset in output order; all channels when `None`.
    pub channels: Option<Vec<String>>,
    pub window: Window,
    pub class_map: BTreeMap<i32, usize>,
    pub class_names: Vec<String>,
    pub rest: Option<RestWindow>,
    pub standardize: bool,
}

impl PipelineSpec {
    /// 5th-order 8–30 Hz band, 100 Hz output, 0–4 s window.
    pub fn motor_imagery(class_map: BTreeMap<i32, usize>, class_names: Vec<String>) -> Self {
        PipelineSpec {
            order: 5,
            low_hz: 8.0,
            high_hz: 30.0,
            target_fs: 100.0,
            channels: None,
            window: Window::new(0.0, 4.0),
            class_map,
            class_names,
            rest: None,
            standardize: false,
        }
    }

    pub fn filter_at(&self, fs: f64) -> FilterSpec {
        FilterSpec::new(self.order, self.low_hz, self.high_hz, fs)
    }

    /// Checks everything that does not depend on a particular recording.
    pub fn validate(&self) -> Result<()> {
        self.filter_at(self.target_fs.max(2.0 * self.high_hz + 1.0)).validate()?;
        self.window.validate()?;
        Resampler::new(self.target_fs, self.target_fs)?;
        Ok(())
    }
}

/// Channel selection, zero-phase band-pass at the native rate, resampling, then epoching.
/// Filtering comes first so the anti-alias stage of the resampler protects the pass band.
pub fn preprocess_pipeline(rec: &RawRecording, spec: &PipelineSpec) -> Result<EpochedDataset> {
    let rec = match &spec.channels {
        Some(names) => select_channels(rec, names)?,
        None => rec.clone(),
    };
    let filter = butter_bandpass(&spec.filter_at(rec.fs))?;
    let resampler = Resampler::new(rec.fs, spec.target_fs)?;
    let rows = rec.map_channels(|x| Ok(resampler.apply(&filtfilt(&filter, x)?)))?;
    let n_out = rows.first().map_or(0, Vec::len);
    let events: Vec<Event> = rec
        .events
        .iter()
        .map(|e| Event {
            sample: (resampler.map_index(e.sample as usize).round() as usize).min(n_out.saturating_sub(1)) as u32,
            code: e.code,
        })
        .collect();
    let resampled = rec.with_channels(rows, spec.target_fs, events)?;
    let mut ds = epoch_with_rest(&resampled, spec.window, &spec.class_map, spec.rest, &spec.class_names)?;
    if spec.standardize {
        ds.standardize();
    }
    Ok(ds)
}
