//! The record-bundle container: a single-file binary format holding named
//! channels (and optionally stage labels or named tensors) behind a UTF-8
//! text header.
//!
//! Layout: magic `SNZ0`, little-endian u32 header length, UTF-8 header,
//! payload. The payload is the concatenation of each channel's samples in
//! header order as little-endian 32-bit floats. Writers emit bytes
//! deterministically; `write . read` is the identity bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::signal::StageSequence;

pub const MAGIC: [u8; 4] = *b"SNZ0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bad magic: expected SNZ0, found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("count mismatch in channel '{channel}': header declares {declared}, payload holds {actual}")]
    CountMismatch { channel: String, declared: usize, actual: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("invalid stage code {0}")]
    InvalidStageCode(u8),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One named channel of 32-bit float samples.
///
/// `sample_rate_hz` is the nominal rate for time-series channels; event-list
/// channels (beat times, movement intervals) use a rate of 1.0 and carry
/// values in seconds. Checkpoint tensors set `shape` instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub sample_rate_hz: f64,
    pub samples: Vec<f32>,
    /// Tensor shape for checkpoint channels; empty for plain time series.
    pub shape: Vec<usize>,
}

impl Channel {
    pub fn time_series(name: impl Into<String>, sample_rate_hz: f64, samples: Vec<f32>) -> Self {
        Self { name: name.into(), sample_rate_hz, samples, shape: Vec::new() }
    }

    pub fn tensor(name: impl Into<String>, shape: &[usize], samples: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), samples.len());
        Self { name: name.into(), sample_rate_hz: 0.0, samples, shape: shape.to_vec() }
    }
}

/// Stage labels stored inside a bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageBlock {
    pub epoch_s: u32,
    pub codes: Vec<u8>,
}

impl StageBlock {
    pub fn from_sequence(seq: &StageSequence) -> Self {
        Self { epoch_s: crate::signal::EPOCH_S as u32, codes: seq.codes() }
    }

    pub fn to_sequence(&self) -> Result<StageSequence, BundleError> {
        match StageSequence::from_codes(&self.codes) {
            Some(seq) => Ok(seq),
            None => {
                let bad = *self.codes.iter().find(|&&c| c > 4).expect("some code is invalid");
                Err(BundleError::InvalidStageCode(bad))
            }
        }
    }
}

/// In-memory representation of one bundle file.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordBundle {
    pub record_id: String,
    pub channels: Vec<Channel>,
    pub stages: Option<StageBlock>,
}

impl RecordBundle {
    pub fn new(record_id: impl Into<String>) -> Self {
        Self { record_id: record_id.into(), channels: Vec::new(), stages: None }
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    fn header_text(&self) -> String {
        let mut h = String::new();
        let _ = writeln!(h, "format_version={FORMAT_VERSION}");
        let _ = writeln!(h, "record_id={}", self.record_id);
        for c in &self.channels {
            let _ = writeln!(h, "[channel]");
            let _ = writeln!(h, "name={}", c.name);
            let _ = writeln!(h, "sample_rate_hz={}", format_f64(c.sample_rate_hz));
            let _ = writeln!(h, "sample_count={}", c.samples.len());
            let _ = writeln!(h, "dtype=f32");
            if !c.shape.is_empty() {
                let dims: Vec<String> = c.shape.iter().map(|d| d.to_string()).collect();
                let _ = writeln!(h, "shape={}", dims.join(","));
            }
        }
        if let Some(stages) = &self.stages {
            let _ = writeln!(h, "[stages]");
            let _ = writeln!(h, "epoch_s={}", stages.epoch_s);
            let codes: Vec<String> = stages.codes.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(h, "codes={}", codes.join(","));
        }
        h
    }

    /// Serializes to the byte-exact on-disk form.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header_text().into_bytes();
        let payload_len: usize = self.channels.iter().map(|c| c.samples.len() * 4).sum();
        let mut out = Vec::with_capacity(8 + header.len() + payload_len);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for c in &self.channels {
            for s in &c.samples {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        if bytes.len() < 8 {
            return Err(BundleError::TruncatedPayload { expected: 8, found: bytes.len() });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(BundleError::BadMagic(magic));
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        if bytes.len() < 8 + header_len {
            return Err(BundleError::TruncatedPayload {
                expected: 8 + header_len,
                found: bytes.len(),
            });
        }
        let header = std::str::from_utf8(&bytes[8..8 + header_len])
            .map_err(|e| BundleError::MalformedHeader(format!("header not UTF-8: {e}")))?;
        let (mut bundle, counts) = parse_header(header)?;

        let mut offset = 8 + header_len;
        for (c, &declared) in bundle.channels.iter_mut().zip(&counts) {
            let bytes_needed = declared * 4;
            let available = bytes.len().saturating_sub(offset);
            if available < bytes_needed {
                return Err(BundleError::CountMismatch {
                    channel: c.name.clone(),
                    declared,
                    actual: available / 4,
                });
            }
            for i in 0..declared {
                let at = offset + i * 4;
                c.samples.push(f32::from_le_bytes(
                    bytes[at..at + 4].try_into().expect("4 bytes"),
                ));
            }
            offset += bytes_needed;
        }
        if offset != bytes.len() {
            return Err(BundleError::MalformedHeader(format!(
                "{} trailing bytes after the declared payload",
                bytes.len() - offset
            )));
        }
        Ok(bundle)
    }
}

/// Shortest representation of a float that parses back exactly.
fn format_f64(v: f64) -> String {
    let s = format!("{v}");
    debug_assert_eq!(s.parse::<f64>().unwrap(), v);
    s
}

fn parse_header(text: &str) -> Result<(RecordBundle, Vec<usize>), BundleError> {
    let malformed = |msg: String| BundleError::MalformedHeader(msg);
    let mut version: Option<u32> = None;
    let mut counts: Vec<usize> = Vec::new();
    let mut bundle = RecordBundle::new("");
    let mut current: Option<ChannelDraft> = None;
    let mut in_stages = false;
    let mut stages_draft: (Option<u32>, Option<Vec<u8>>) = (None, None);

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if line == "[channel]" {
            if let Some(done) = current.take() {
                let (channel, count) = done.finish(lineno)?;
                bundle.channels.push(channel);
                counts.push(count);
            }
            if in_stages {
                return Err(malformed("[channel] after [stages]".into()));
            }
            current = Some(ChannelDraft::default());
            continue;
        }
        if line == "[stages]" {
            if let Some(done) = current.take() {
                let (channel, count) = done.finish(lineno)?;
                bundle.channels.push(channel);
                counts.push(count);
            }
            in_stages = true;
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(format!("line {}: expected key=value", lineno + 1)))?;
        match (&mut current, in_stages, key) {
            (None, false, "format_version") => {
                version = Some(
                    value.parse().map_err(|_| malformed(format!("bad version '{value}'")))?,
                );
            }
            (None, false, "record_id") => bundle.record_id = value.to_string(),
            (Some(draft), false, "name") => draft.name = Some(value.to_string()),
            (Some(draft), false, "sample_rate_hz") => {
                draft.rate = Some(
                    value.parse().map_err(|_| malformed(format!("bad rate '{value}'")))?,
                );
            }
            (Some(draft), false, "sample_count") => {
                draft.count = Some(
                    value.parse().map_err(|_| malformed(format!("bad count '{value}'")))?,
                );
            }
            (Some(_), false, "dtype") => {
                if value != "f32" {
                    return Err(malformed(format!("unsupported dtype '{value}'")));
                }
            }
            (Some(draft), false, "shape") => {
                let dims: Result<Vec<usize>, _> =
                    value.split(',').map(|d| d.trim().parse()).collect();
                draft.shape =
                    dims.map_err(|_| malformed(format!("bad shape '{value}'")))?;
            }
            (_, true, "epoch_s") => {
                stages_draft.0 = Some(
                    value.parse().map_err(|_| malformed(format!("bad epoch_s '{value}'")))?,
                );
            }
            (_, true, "codes") => {
                let codes: Result<Vec<u8>, _> =
                    value.split(',').map(|c| c.trim().parse()).collect();
                stages_draft.1 =
                    Some(codes.map_err(|_| malformed("bad stage codes".to_string()))?);
            }
            _ => return Err(malformed(format!("line {}: unknown key '{key}'", lineno + 1))),
        }
    }
    if let Some(done) = current.take() {
        let (channel, count) = done.finish(0)?;
        bundle.channels.push(channel);
        counts.push(count);
    }
    match version {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(BundleError::UnsupportedVersion(v)),
        None => return Err(malformed("missing format_version".into())),
    }
    if in_stages {
        let codes = stages_draft.1.ok_or_else(|| malformed("stages without codes".into()))?;
        if codes.iter().any(|&c| c > 4) {
            let bad = *codes.iter().find(|&&c| c > 4).expect("checked");
            return Err(BundleError::InvalidStageCode(bad));
        }
        bundle.stages = Some(StageBlock {
            epoch_s: stages_draft.0.ok_or_else(|| malformed("stages without epoch_s".into()))?,
            codes,
        });
    }
    Ok((bundle, counts))
}

#[derive(Default)]
struct ChannelDraft {
    name: Option<String>,
    rate: Option<f64>,
    count: Option<usize>,
    shape: Vec<usize>,
}

impl ChannelDraft {
    fn finish(self, lineno: usize) -> Result<(Channel, usize), BundleError> {
        let name = self.name.ok_or_else(|| {
            BundleError::MalformedHeader(format!("channel near line {lineno} missing name"))
        })?;
        let count = self.count.ok_or_else(|| {
            BundleError::MalformedHeader(format!("channel '{name}' missing sample_count"))
        })?;
        if !self.shape.is_empty() && self.shape.iter().product::<usize>() != count {
            return Err(BundleError::MalformedHeader(format!(
                "channel '{name}': shape product does not match sample_count {count}"
            )));
        }
        Ok((
            Channel {
                name,
                sample_rate_hz: self.rate.unwrap_or(0.0),
                samples: Vec::with_capacity(count),
                shape: self.shape,
            },
            count,
        ))
    }
}

/// Reads a bundle file.
pub fn read_bundle(path: &Path) -> Result<RecordBundle, BundleError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    RecordBundle::from_bytes(&bytes)
}

/// Writes a bundle atomically (temp file in the same directory, then rename).
pub fn write_bundle(bundle: &RecordBundle, path: &Path) -> Result<(), BundleError> {
    let bytes = bundle.to_bytes();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Stage;

    fn sample_bundle() -> RecordBundle {
        let mut b = RecordBundle::new("rec-007");
        b.channels.push(Channel::time_series("raw", 100.0, vec![0.5, -1.25, 3.75]));
        b.channels.push(Channel::time_series("beat_times", 1.0, vec![0.8, 1.6]));
        b.stages = Some(StageBlock::from_sequence(&StageSequence::new(vec![
            Stage::Wake,
            Stage::N2,
            Stage::Rem,
        ])));
        b
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let b = sample_bundle();
        let bytes = b.to_bytes();
        let parsed = RecordBundle::from_bytes(&bytes).unwrap();
        assert_eq!(parsed, b);
        assert_eq!(parsed.to_bytes(), bytes);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = sample_bundle().to_bytes();
        bytes[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(RecordBundle::from_bytes(&bytes), Err(BundleError::BadMagic(_))));
    }

    #[test]
    fn count_mismatch_names_the_channel() {
        let b = sample_bundle();
        let mut bytes = b.to_bytes();
        bytes.truncate(bytes.len() - 8); // drop both beat_times samples
        let err = RecordBundle::from_bytes(&bytes).unwrap_err();
        match err {
            BundleError::CountMismatch { channel, declared, actual } => {
                assert_eq!(channel, "beat_times");
                assert_eq!(declared, 2);
                assert_eq!(actual, 0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn unknown_header_key_is_rejected() {
        let text = "format_version=1\nrecord_id=x\nmystery=1\n";
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&(text.len() as u32).to_le_bytes());
        bytes.extend_from_slice(text.as_bytes());
        assert!(matches!(
            RecordBundle::from_bytes(&bytes),
            Err(BundleError::MalformedHeader(_))
        ));
    }

    #[test]
    fn tensor_channels_carry_shape() {
        let mut b = RecordBundle::new("ckpt");
        b.channels.push(Channel::tensor("w", &[2, 3], vec![0.0; 6]));
        let parsed = RecordBundle::from_bytes(&b.to_bytes()).unwrap();
        assert_eq!(parsed.channel("w").unwrap().shape, vec![2, 3]);
    }

    #[test]
    fn stage_codes_validated() {
        let text = "format_version=1\nrecord_id=x\n[stages]\nepoch_s=30\ncodes=0,7\n";
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&(text.len() as u32).to_le_bytes());
        bytes.extend_from_slice(text.as_bytes());
        assert!(matches!(
            RecordBundle::from_bytes(&bytes),
            Err(BundleError::InvalidStageCode(7))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.snz");
        let b = sample_bundle();
        write_bundle(&b, &path).unwrap();
        let read = read_bundle(&path).unwrap();
        assert_eq!(read, b);
    }
}
