use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::{EpochedDataset, SessionTag};
use crate::error::{Error, Result};

/// Marker in the event table: onset sample and dataset-specific code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub sample: u32,
    pub code: i32,
}

/// Continuous multichannel recording of one session, channel-major f32 microvolts.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecording {
    samples: Vec<f32>,
    n_samples: usize,
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub events: Vec<Event>,
    pub subject: u32,
    pub session: SessionTag,
}

impl RawRecording {
    pub fn new(
        samples: Vec<f32>,
        channel_names: Vec<String>,
        fs: f64,
        events: Vec<Event>,
        subject: u32,
        session: SessionTag,
    ) -> Result<Self> {
        let c = channel_names.len();
        if c == 0 {
            return Err(Error::dim("recording has no channels"));
        }
        if samples.len() % c != 0 {
            return Err(Error::dim(format!("{} samples do not split into {c} channels", samples.len())));
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidArg {
                arg: "fs",
                reason: format!("{fs} is not a positive rate"),
            });
        }
        let n_samples = samples.len() / c;
        if let Some(e) = events.iter().find(|e| e.sample as usize >= n_samples) {
            return Err(Error::InvalidArg {
                arg: "events",
                reason: format!("event code {} at sample {} lies past the end ({n_samples})", e.code, e.sample),
            });
        }
        Ok(RawRecording {
            samples,
            n_samples,
            fs,
            channel_names,
            events,
            subject,
            session,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.samples[c * self.n_samples..(c + 1) * self.n_samples]
    }

    /// Replaces every channel with the output of `f`. All outputs must share one length.
    pub fn map_channels(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
        (0..self.n_channels())
            .map(|c| {
                let x: Vec<f64> = self.channel(c).iter().map(|&v| v as f64).collect();
                f(&x)
            })
            .collect()
    }

    pub(crate) fn with_channels(&self, rows: Vec<Vec<f64>>, fs: f64, events: Vec<Event>) -> Result<Self> {
        let samples = rows.iter().flat_map(|r| r.iter().map(|&v| v as f32)).collect();
        RawRecording::new(samples, self.channel_names.clone(), fs, events, self.subject, self.session)
    }
}

/// Keeps the named channels, in the order given.
pub fn select_channels(rec: &RawRecording, wanted: &[String]) -> Result<RawRecording> {
    let missing: Vec<&str> = wanted
        .iter()
        .filter(|w| !rec.channel_names.contains(w))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidArg {
            arg: "channels",
            reason: format!("not in recording: {}", missing.join(", ")),
        });
    }
    let mut samples = Vec::with_capacity(wanted.len() * rec.n_samples);
    for w in wanted {
        let c = rec.channel_names.iter().position(|n| n == w).unwrap();
        samples.extend_from_slice(rec.channel(c));
    }
    RawRecording::new(samples, wanted.to_vec(), rec.fs, rec.events.clone(), rec.subject, rec.session)
}

/// Time window relative to an event onset, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_s: f64,
    pub end_s: f64,
}

impl Window {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Window { start_s, end_s }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start_s.is_finite() && self.end_s > self.start_s) {
            return Err(Error::InvalidArg {
                arg: "window",
                reason: format!("[{}, {}] s is empty", self.start_s, self.end_s),
            });
        }
        Ok(())
    }

    pub fn offset(&self, fs: f64) -> i64 {
        (self.start_s * fs).round() as i64
    }

    pub fn len(&self, fs: f64) -> usize {
        ((self.end_s - self.start_s) * fs).round() as usize
    }
}

/// Extra trial cut from every mapped event, e.g. a rest period after the imagery window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestWindow {
    pub window: Window,
    pub label: usize,
}

/// Cuts one trial per mapped event. With `rest`, each mapped event also yields a rest trial,
/// placed right after its task trial.
pub fn epoch_with_rest(
    rec: &RawRecording,
    window: Window,
    class_map: &BTreeMap<i32, usize>,
    rest: Option<RestWindow>,
    class_names: &[String],
) -> Result<EpochedDataset> {
    window.validate()?;
    let fs = rec.fs;
    let len = window.len(fs);
    let mut specs = vec![(window, None)];
    if let Some(r) = rest {
        r.window.validate()?;
        if r.window.len(fs) != len {
            return Err(Error::InvalidArg {
                arg: "rest_window",
                reason: format!("{} samples, task window has {len}", r.window.len(fs)),
            });
        }
        specs.push((r.window, Some(r.label)));
    }
    let c = rec.n_channels();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, ev) in rec.events.iter().enumerate() {
        let Some(&label) = class_map.get(&ev.code) else {
            continue;
        };
        for (w, fixed) in &specs {
            let start = ev.sample as i64 + w.offset(fs);
            if start < 0 || start as usize + len > rec.n_samples() {
                return Err(Error::InvalidArg {
                    arg: "window",
                    reason: format!(
                        "event {i} (code {} at sample {}) needs samples {start}..{} but the recording has {}",
                        ev.code,
                        ev.sample,
                        start + len as i64,
                        rec.n_samples()
                    ),
                });
            }
            for ch in 0..c {
                data.extend_from_slice(&rec.channel(ch)[start as usize..start as usize + len]);
            }
            labels.push(fixed.unwrap_or(label));
        }
    }
    let n = labels.len();
    EpochedDataset::new(
        data,
        c,
        len.max(1),
        labels,
        vec![rec.subject; n],
        vec![rec.session; n],
        fs,
        rec.channel_names.clone(),
        class_names.to_vec(),
    )
}

pub fn epoch(rec: &RawRecording, window: Window, class_map: &BTreeMap<i32, usize>) -> Result<EpochedDataset> {
    epoch_with_rest(rec, window, class_map, None, &[])
}
