use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::TensorBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Offline,
    Online,
}

/// Recording session of a trial. Packs into one byte: high bit set for online, low 7 bits index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionTag {
    pub kind: SessionKind,
    pub index: u8,
}

impl SessionTag {
    pub fn offline(index: u8) -> Self {
        SessionTag {
            kind: SessionKind::Offline,
            index,
        }
    }

    pub fn online(index: u8) -> Self {
        SessionTag {
            kind: SessionKind::Online,
            index,
        }
    }

    pub fn to_byte(self) -> u8 {
        let hi = if self.kind == SessionKind::Online { 0x80 } else { 0 };
        hi | (self.index & 0x7f)
    }

    pub fn from_byte(b: u8) -> Self {
        SessionTag {
            kind: if b & 0x80 != 0 {
                SessionKind::Online
            } else {
                SessionKind::Offline
            },
            index: b & 0x7f,
        }
    }
}

impl std::fmt::Display for SessionTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = match self.kind {
            SessionKind::Offline => "offline",
            SessionKind::Online => "online",
        };
        write!(f, "{k}{}", self.index)
    }
}

/// Trials × channels × time, stored trial-major in f32 microvolts, with per-trial metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochedDataset {
    data: Vec<f32>,
    n_channels: usize,
    n_samples: usize,
    labels: Vec<usize>,
    subject_ids: Vec<u32>,
    session_tags: Vec<SessionTag>,
    fs: f64,
    pub channel_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl EpochedDataset {
    /// Validates and assembles a dataset. `channel_names` and `class_names` may be empty,
    /// in which case placeholder names are generated.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        data: Vec<f32>,
        n_channels: usize,
        n_samples: usize,
        labels: Vec<usize>,
        subject_ids: Vec<u32>,
        session_tags: Vec<SessionTag>,
        fs: f64,
        channel_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if n_channels == 0 || n_samples == 0 {
            return Err(Error::dim("datasets need at least one channel and one sample"));
        }
        if data.len() != n * n_channels * n_samples {
            return Err(Error::dim(format!(
                "{} values do not fill {n} trials of {n_channels}×{n_samples}",
                data.len()
            )));
        }
        if subject_ids.len() != n || session_tags.len() != n {
            return Err(Error::dim(format!(
                "{n} labels but {} subject ids and {} session tags",
                subject_ids.len(),
                session_tags.len()
            )));
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidArg {
                arg: "fs",
                reason: format!("{fs} is not a positive rate"),
            });
        }
        let channel_names = if channel_names.is_empty() {
            (0..n_channels).map(|c| format!("ch{c}")).collect()
        } else {
            channel_names
        };
        if channel_names.len() != n_channels {
            return Err(Error::dim(format!(
                "{} channel names for {n_channels} channels",
                channel_names.len()
            )));
        }
        let top = labels.iter().copied().max().map_or(0, |m| m + 1);
        let class_names = if class_names.is_empty() {
            (0..top.max(1)).map(|c| format!("class{c}")).collect()
        } else {
            class_names
        };
        if top > class_names.len() {
            return Err(Error::InvalidArg {
                arg: "labels",
                reason: format!("label {} but only {} classes", top - 1, class_names.len()),
            });
        }
        Ok(EpochedDataset {
            data,
            n_channels,
            n_samples,
            labels,
            subject_ids,
            session_tags,
            fs,
            channel_names,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subject_ids(&self) -> &[u32] {
        &self.subject_ids
    }

    pub fn session_tags(&self) -> &[SessionTag] {
        &self.session_tags
    }

    /// Channel-major samples of trial `i`.
    pub fn trial(&self, i: usize) -> &[f32] {
        let w = self.n_channels * self.n_samples;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn trial_mut(&mut self, i: usize) -> &mut [f32] {
        let w = self.n_channels * self.n_samples;
        &mut self.data[i * w..(i + 1) * w]
    }

    /// Distinct subject ids in ascending order.
    pub fn subjects(&self) -> Vec<u32> {
        let mut s = self.subject_ids.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Distinct session tags in ascending order.
    pub fn sessions(&self) -> Vec<SessionTag> {
        let mut s = self.session_tags.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn indices_where(&self, mut keep: impl FnMut(u32, SessionTag) -> bool) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| keep(self.subject_ids[i], self.session_tags[i]))
            .collect()
    }

    /// New dataset holding the listed trials in the listed order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let w = self.n_channels * self.n_samples;
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend_from_slice(self.trial(i));
        }
        EpochedDataset {
            data,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            subject_ids: indices.iter().map(|&i| self.subject_ids[i]).collect(),
            session_tags: indices.iter().map(|&i| self.session_tags[i]).collect(),
            ..self.empty_like()
        }
    }

    pub fn empty_like(&self) -> Self {
        EpochedDataset {
            data: Vec::new(),
            labels: Vec::new(),
            subject_ids: Vec::new(),
            session_tags: Vec::new(),
            n_channels: self.n_channels,
            n_samples: self.n_samples,
            fs: self.fs,
            channel_names: self.channel_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Appends the trials of `other`, which must have the same geometry and rate.
    pub fn extend(&mut self, other: &EpochedDataset) -> Result<()> {
        if other.n_channels != self.n_channels || other.n_samples != self.n_samples || other.fs != self.fs {
            return Err(Error::dim(format!(
                "cannot append {}×{} @ {} Hz trials to a {}×{} @ {} Hz dataset",
                other.n_channels, other.n_samples, other.fs, self.n_channels, self.n_samples, self.fs
            )));
        }
        if other.class_names.len() > self.class_names.len() {
            self.class_names = other.class_names.clone();
        }
        self.data.extend_from_slice(&other.data);
        self.labels.extend_from_slice(&other.labels);
        self.subject_ids.extend_from_slice(&other.subject_ids);
        self.session_tags.extend_from_slice(&other.session_tags);
        Ok(())
    }

    /// Model input `[B, 1, T, C]` (channels last) for the listed trials.
    pub fn batch_tensor(&self, indices: &[usize]) -> TensorBuf<f32> {
        let (c, t) = (self.n_channels, self.n_samples);
        let mut out = Vec::with_capacity(indices.len() * c * t);
        for &i in indices {
            let trial = self.trial(i);
            for s in 0..t {
                out.extend((0..c).map(|ch| trial[ch * t + s]));
            }
        }
        TensorBuf::from_vec(&[indices.len(), 1, t, c], out).unwrap()
    }

    /// Per-trial, per-channel zero mean and unit variance. Flat channels are only centred.
    pub fn standardize(&mut self) {
        let t = self.n_samples;
        for row in self.data.chunks_mut(t) {
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / t as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / t as f64;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for v in row {
                *v = ((*v as f64 - mean) / sd) as f32;
            }
        }
    }
}
