//! On-disk layout of day files and the dataset manifest.
//!
//! Day file, little-endian:
//!
//! ```text
//! "FCAD" | version u16 | H u16 | W u16 | frame count u32
//! per frame: timestamp f64 | label i8 | segment i8 | anomaly_kind u8 | H*W f32
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::day::{AnomalyKind, DayId, DaySequence, Label, Sample, Segment, SetupTag};
use super::frame::ThermalFrame;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DAY_MAGIC: &[u8; 4] = b"FCAD";
pub const DAY_VERSION: u16 = 1;
pub const DAY_EXTENSION: &str = "fcad";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn encode_day<S: Scalar>(day: &DaySequence<S>, height: usize, width: usize) -> Result<Vec<u8>> {
    let bad = |reason: String| Error::Format { what: "day", reason };
    let h = u16::try_from(height).map_err(|_| bad(format!("height {height} exceeds u16")))?;
    let w = u16::try_from(width).map_err(|_| bad(format!("width {width} exceeds u16")))?;
    let n = u32::try_from(day.len()).map_err(|_| bad("too many frames".into()))?;
    let mut out = Vec::with_capacity(14 + day.len() * (11 + 4 * height * width));
    out.extend_from_slice(DAY_MAGIC);
    out.extend_from_slice(&DAY_VERSION.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    for s in &day.samples {
        if s.frame.height() != height || s.frame.width() != width {
            return Err(bad(format!(
                "frame at t={} is {}x{}, expected {height}x{width}",
                s.t,
                s.frame.height(),
                s.frame.width()
            )));
        }
        out.extend_from_slice(&s.t.to_le_bytes());
        out.push(s.y.code() as u8);
        out.push(s.segment.code() as u8);
        out.push(s.anomaly_kind.map_or(0, AnomalyKind::code));
        for p in s.frame.pixels() {
            out.extend_from_slice(&(p.f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_day<S: Scalar>(day_id: DayId, bytes: &[u8]) -> Result<DaySequence<S>> {
    let bad = |reason: String| Error::Format { what: "day", reason };
    if bytes.len() < 14 || &bytes[..4] != DAY_MAGIC {
        return Err(bad("missing FCAD header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != DAY_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let height = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let width = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let count = u32::from_le_bytes([bytes[10], bytes[11], bytes[12], bytes[13]]) as usize;
    let record = 11 + 4 * height * width;
    if bytes.len() != 14 + count * record {
        return Err(bad(format!(
            "{} bytes for {count} frames of {height}x{width}",
            bytes.len()
        )));
    }
    let mut samples = Vec::with_capacity(count);
    for rec in bytes[14..].chunks_exact(record) {
        let t = f64::from_le_bytes(rec[..8].try_into().expect("8 bytes"));
        let y = Label::from_code(rec[8] as i8)?;
        let segment = Segment::from_code(rec[9] as i8)?;
        let anomaly_kind = AnomalyKind::from_code(rec[10])?;
        let pixels = rec[11..]
            .chunks_exact(4)
            .map(|c| S::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        samples.push(Sample {
            frame: ThermalFrame::new(height, width, pixels)?,
            t,
            y,
            segment,
            day_id: day_id.clone(),
            anomaly_kind,
        });
    }
    DaySequence::new(day_id, samples)
}

pub fn day_path(dir: &Path, id: &DayId) -> PathBuf {
    dir.join(format!("{}.{DAY_EXTENSION}", id.0))
}

/// Writes `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_day<S: Scalar>(dir: &Path, day: &DaySequence<S>, height: usize, width: usize) -> Result<PathBuf> {
    let path = day_path(dir, &day.day_id);
    write_atomic(&path, &encode_day(day, height, width)?)?;
    Ok(path)
}

pub fn read_day<S: Scalar>(dir: &Path, id: &DayId) -> Result<DaySequence<S>> {
    let path = day_path(dir, id);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    decode_day(id.clone(), &bytes).map_err(|e| match e {
        Error::Format { what, reason } => Error::Format { what, reason: format!("{}: {reason}", path.display()) },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedDay {
    pub day: DayId,
    pub reason: String,
}

/// Dataset index: the day files present and their split membership.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manifest {
    pub days: Vec<DayId>,
    pub train: Vec<DayId>,
    pub validation: Vec<DayId>,
    pub test: Vec<DayId>,
    pub setup: Option<SetupTag>,
    pub height: usize,
    pub width: usize,
    /// True when `anomaly_kind` bytes carry simulator ground truth.
    pub simulated: bool,
    pub dropped: Vec<DroppedDay>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json { path: path.clone(), source })?;
        write_atomic(&path, text.as_bytes())
    }

    /// Days that survived filtering.
    pub fn active_days(&self) -> Vec<DayId> {
        self.days
            .iter()
            .filter(|d| !self.dropped.iter().any(|x| &x.day == *d))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(values: &[(f64, i8, i8, u8, f32)]) -> DaySequence<f32> {
        let samples = values
            .iter()
            .map(|&(t, y, seg, kind, v)| Sample {
                frame: ThermalFrame::new(2, 3, vec![v, v + 1.0, v + 2.0, v, v, v]).unwrap(),
                t,
                y: Label::from_code(y).unwrap(),
                segment: Segment::from_code(seg).unwrap(),
                day_id: "day_0001".into(),
                anomaly_kind: AnomalyKind::from_code(kind).unwrap(),
            })
            .collect();
        DaySequence::new("day_0001".into(), samples).unwrap()
    }

    #[test]
    fn header_layout() {
        let d = day(&[(1.5, 1, 2, 3, 7.0)]);
        let bytes = encode_day(&d, 2, 3).unwrap();
        assert_eq!(&bytes[..4], b"FCAD");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 2);
        assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 3);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(bytes[14..22].try_into().unwrap()), 1.5);
        assert_eq!(bytes[22] as i8, 1);
        assert_eq!(bytes[23] as i8, 2);
        assert_eq!(bytes[24], 3);
        assert_eq!(f32::from_le_bytes(bytes[25..29].try_into().unwrap()), 7.0);
        assert_eq!(bytes.len(), 14 + 11 + 24);
    }

    #[test]
    fn rejects_corruption() {
        let d = day(&[(1.0, 0, 1, 0, 3.0)]);
        let mut bytes = encode_day(&d, 2, 3).unwrap();
        assert!(decode_day::<f32>("x".into(), &bytes[..bytes.len() - 1]).is_err());
        bytes[24] = 42;
        assert!(matches!(decode_day::<f32>("x".into(), &bytes), Err(Error::UnknownKind(42))));
        bytes[0] = b'X';
        assert!(decode_day::<f32>("x".into(), &bytes).is_err());
    }

    #[test]
    fn manifest_roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            days: vec!["a".into(), "b".into()],
            train: vec!["a".into()],
            test: vec!["b".into()],
            setup: Some(SetupTag::Tr2),
            ..Default::default()
        };
        m.save(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(text.contains("\"setup\": \"Tr#2\""));
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
    }

    proptest! {
        #[test]
        fn day_roundtrip(rows in prop::collection::vec((1u32..500, -1i8..=1, -1i8..=2, 0u8..=4, 0.0f32..500.0), 0..12)) {
            let mut t = 1000.0;
            let values: Vec<_> = rows.iter().map(|&(gap, y, seg, kind, v)| {
                t += gap as f64 + 0.25;
                (t, y, seg, kind, v)
            }).collect();
            let d = day(&values);
            let back: DaySequence<f32> = decode_day("day_0001".into(), &encode_day(&d, 2, 3).unwrap()).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
