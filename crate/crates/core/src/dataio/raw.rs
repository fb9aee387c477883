//! Canonical raw layout: continuous per-session recordings plus a manifest.
//!
//! ```text
//! "MIRW" | version u32 | fs f64 | subject u32 | session tag u8
//! n_channels u32 | n_samples u32 | n_events u32
//! channel names: (len u16, utf-8 bytes) × n_channels
//! events: (sample u32, code i32) × n_events
//! f32 samples, channel-major (channel, time)
//! CRC32 (IEEE) of every preceding byte, u32
//! ```
//! The session tag byte uses the same packing as [`SessionTag::to_byte`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{read_json, write_json};
use super::SessionTag;
use crate::binio::{self, Writer};
use crate::error::{Error, Result};
use crate::preproc::{Event, RawRecording};

pub const RAW_MAGIC: &[u8; 4] = b"MIRW";
pub const RAW_VERSION: u32 = 1;
pub const RAW_MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventClass {
    pub code: i32,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEntry {
    pub subject: u32,
    pub session: SessionTag,
    pub file: String,
    pub crc32: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawManifest {
    pub format: String,
    pub format_version: u32,
    pub dataset: String,
    pub recordings: Vec<RawEntry>,
    /// Subjects the source archive lacked.
    #[serde(default)]
    pub absent_subjects: Vec<u32>,
    /// Event codes that mark trials, in label order.
    #[serde(default)]
    pub event_classes: Vec<EventClass>,
}

pub fn encode_raw(rec: &RawRecording) -> Result<Vec<u8>> {
    let mut w = Writer::new(RAW_MAGIC, RAW_VERSION);
    w.f64(rec.fs);
    w.u32(rec.subject);
    w.u8(rec.session.to_byte());
    w.u32(rec.n_channels() as u32);
    w.u32(rec.n_samples() as u32);
    w.u32(rec.events.len() as u32);
    for name in &rec.channel_names {
        let len = u16::try_from(name.len()).map_err(|_| Error::InvalidArg {
            arg: "channel_names",
            reason: format!("name of {} bytes is too long", name.len()),
        })?;
        w.u16(len);
        w.bytes(name.as_bytes());
    }
    for e in &rec.events {
        w.u32(e.sample);
        w.i32(e.code);
    }
    w.f32s(rec.samples());
    Ok(w.finish())
}

pub fn decode_raw(bytes: &[u8], path: &Path) -> Result<RawRecording> {
    let mut r = binio::open(bytes, path, RAW_MAGIC, RAW_VERSION)?;
    let fs = r.f64()?;
    let subject = r.u32()?;
    let session = SessionTag::from_byte(r.u8()?);
    let c = r.u32()? as usize;
    let n = r.u32()? as usize;
    let n_events = r.u32()? as usize;
    let names = (0..c).map(|_| r.string_u16()).collect::<Result<Vec<_>>>()?;
    let mut events = Vec::with_capacity(n_events.min(1 << 20));
    for _ in 0..n_events {
        events.push(Event {
            sample: r.u32()?,
            code: r.i32()?,
        });
    }
    let samples = r.f32s(c.checked_mul(n).ok_or_else(|| binio::integrity(path, "size overflow"))?)?;
    r.expect_end()?;
    RawRecording::new(samples, names, fs, events, subject, session).map_err(|e| binio::integrity(path, e.to_string()))
}

pub fn write_raw_recording(rec: &RawRecording, path: &Path) -> Result<u32> {
    let bytes = encode_raw(rec)?;
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(crc32fast::hash(&bytes))
}

pub fn read_raw_recording(path: &Path) -> Result<RawRecording> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes, path)
}

/// Writes recordings as `sub<id>_<session>.mirw` files plus the manifest.
pub fn write_raw_dir(dir: &Path, dataset: &str, recs: &[RawRecording], event_classes: &[EventClass]) -> Result<RawManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut recordings = Vec::with_capacity(recs.len());
    for rec in recs {
        let file = format!("sub{:03}_{}.mirw", rec.subject, rec.session);
        let crc32 = write_raw_recording(rec, &dir.join(&file))?;
        recordings.push(RawEntry {
            subject: rec.subject,
            session: rec.session,
            file,
            crc32,
        });
    }
    let m = RawManifest {
        format: "MIRW".into(),
        format_version: RAW_VERSION,
        dataset: dataset.into(),
        recordings,
        absent_subjects: Vec::new(),
        event_classes: event_classes.to_vec(),
    };
    write_json(&dir.join(RAW_MANIFEST), &m)?;
    Ok(m)
}

pub fn read_raw_manifest(dir: &Path) -> Result<RawManifest> {
    let path = dir.join(RAW_MANIFEST);
    let m: RawManifest = read_json(&path)?;
    if m.format != "MIRW" {
        return Err(binio::integrity(&path, format!("format `{}` is not MIRW", m.format)));
    }
    if m.format_version != RAW_VERSION {
        return Err(Error::Version {
            path,
            found: m.format_version,
            expected: RAW_VERSION,
        });
    }
    Ok(m)
}

/// Reads one listed recording, checking the manifest checksum and that the header agrees
/// with the manifest's subject and session.
pub fn read_raw_entry(dir: &Path, entry: &RawEntry) -> Result<RawRecording> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if crc32fast::hash(&bytes) != entry.crc32 {
        return Err(binio::integrity(&path, "checksum does not match manifest"));
    }
    let rec = decode_raw(&bytes, &path)?;
    if rec.subject != entry.subject || rec.session != entry.session {
        return Err(binio::integrity(
            &path,
            format!(
                "header names subject {} {} but the manifest lists subject {} {}",
                rec.subject, rec.session, entry.subject, entry.session
            ),
        ));
    }
    Ok(rec)
}
