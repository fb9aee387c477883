//! Directory format for epoched datasets.
//!
//! `manifest.json` lists the subjects. Each subject has a binary file laid out as
//!
//! ```text
//! "MIEG" | version u32 | n_trials u32 | n_channels u32 | n_samples u32 | fs f32
//! labels u8 × n_trials | session tags u8 × n_trials | f32 samples, trial-major (trial, channel, time)
//! CRC32 (IEEE) of every preceding byte, u32
//! ```
//! Little-endian throughout. The manifest records the CRC32 of each whole file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EpochedDataset, SessionTag};
use crate::binio::{self, Writer};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const MAGIC: &[u8; 4] = b"MIEG";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub id: u32,
    pub file: String,
    pub trials: usize,
    pub sessions: Vec<SessionTag>,
    pub crc32: u32,
    /// Positions of this subject's trials in the original dataset, when subjects were interleaved.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub dataset: String,
    pub fs: f64,
    pub n_channels: usize,
    pub n_samples: usize,
    pub channel_names: Vec<String>,
    pub class_names: Vec<String>,
    pub subjects: Vec<SubjectEntry>,
}

impl DatasetManifest {
    pub fn total_trials(&self) -> usize {
        self.subjects.iter().map(|s| s.trials).sum()
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn encode_subject(ds: &EpochedDataset) -> Result<Vec<u8>> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u32(ds.len() as u32);
    w.u32(ds.n_channels() as u32);
    w.u32(ds.n_samples() as u32);
    w.f32(ds.fs() as f32);
    for &l in ds.labels() {
        let b = u8::try_from(l).map_err(|_| Error::InvalidArg {
            arg: "labels",
            reason: format!("label {l} does not fit in a byte"),
        })?;
        w.u8(b);
    }
    for t in ds.session_tags() {
        w.u8(t.to_byte());
    }
    w.f32s(ds.data());
    Ok(w.finish())
}

/// Writes one file per subject plus the manifest. Subjects appear in order of first occurrence.
pub fn write_dataset(ds: &EpochedDataset, dir: &Path, name: &str) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut order: Vec<u32> = Vec::new();
    for &s in ds.subject_ids() {
        if !order.contains(&s) {
            order.push(s);
        }
    }
    let mut subjects = Vec::with_capacity(order.len());
    let mut covered = 0;
    for id in order {
        let idx = ds.indices_where(|s, _| s == id);
        let contiguous = idx.iter().enumerate().all(|(k, &i)| i == covered + k);
        covered += idx.len();
        let part = ds.subset(&idx);
        let bytes = encode_subject(&part)?;
        let file = format!("subject_{id:03}.mieg");
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        subjects.push(SubjectEntry {
            id,
            file,
            trials: idx.len(),
            sessions: part.sessions(),
            crc32: crc32fast::hash(&bytes),
            positions: if contiguous { Vec::new() } else { idx },
        });
    }
    let manifest = DatasetManifest {
        format_version: VERSION,
        dataset: name.to_string(),
        fs: ds.fs(),
        n_channels: ds.n_channels(),
        n_samples: ds.n_samples(),
        channel_names: ds.channel_names.clone(),
        class_names: ds.class_names.clone(),
        subjects,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST);
    let m: DatasetManifest = read_json(&path)?;
    if m.format_version != VERSION {
        return Err(Error::Version {
            path,
            found: m.format_version,
            expected: VERSION,
        });
    }
    Ok(m)
}

fn subject_path(dir: &Path, entry: &SubjectEntry) -> PathBuf {
    dir.join(&entry.file)
}

/// Loads one subject's trials, verifying the checksum and the geometry promised by the manifest.
pub fn read_subject(dir: &Path, manifest: &DatasetManifest, entry: &SubjectEntry) -> Result<EpochedDataset> {
    let path = subject_path(dir, entry);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if crc32fast::hash(&bytes) != entry.crc32 {
        return Err(binio::integrity(&path, "checksum does not match manifest"));
    }
    let mut r = binio::open(&bytes, &path, MAGIC, VERSION)?;
    let n = r.u32()? as usize;
    let c = r.u32()? as usize;
    let t = r.u32()? as usize;
    let fs_file = r.f32()?;
    if n != entry.trials || c != manifest.n_channels || t != manifest.n_samples || fs_file != manifest.fs as f32 {
        return Err(binio::integrity(
            &path,
            format!(
                "header says {n} trials of {c}×{t} @ {fs_file} Hz, manifest says {} of {}×{} @ {} Hz",
                entry.trials, manifest.n_channels, manifest.n_samples, manifest.fs
            ),
        ));
    }
    let labels: Vec<usize> = r.take(n)?.iter().map(|&b| b as usize).collect();
    if let Some(l) = labels.iter().find(|&&l| l >= manifest.class_names.len()) {
        return Err(binio::integrity(
            &path,
            format!("label {l} but only {} classes", manifest.class_names.len()),
        ));
    }
    let tags = r.take(n)?.iter().map(|&b| SessionTag::from_byte(b)).collect();
    let data = r.f32s(n * c * t)?;
    r.expect_end()?;
    EpochedDataset::new(
        data,
        c,
        t,
        labels,
        vec![entry.id; n],
        tags,
        manifest.fs,
        manifest.channel_names.clone(),
        manifest.class_names.clone(),
    )
}

pub fn read_dataset(dir: &Path) -> Result<EpochedDataset> {
    let m = read_manifest(dir)?;
    let mut ds = EpochedDataset::new(
        Vec::new(),
        m.n_channels,
        m.n_samples,
        Vec::new(),
        Vec::new(),
        Vec::new(),
        m.fs,
        m.channel_names.clone(),
        m.class_names.clone(),
    )?;
    let mut positions = Vec::with_capacity(m.total_trials());
    for entry in &m.subjects {
        let start = ds.len();
        ds.extend(&read_subject(dir, &m, entry)?)?;
        if entry.positions.is_empty() {
            positions.extend(start..ds.len());
        } else {
            positions.extend_from_slice(&entry.positions);
        }
    }
    if positions.iter().enumerate().any(|(k, &p)| k != p) {
        let mut inverse = vec![usize::MAX; positions.len()];
        for (k, &p) in positions.iter().enumerate() {
            if p >= inverse.len() || inverse[p] != usize::MAX {
                return Err(binio::integrity(&dir.join(MANIFEST), "trial positions are not a permutation"));
            }
            inverse[p] = k;
        }
        ds = ds.subset(&inverse);
    }
    Ok(ds)
}
