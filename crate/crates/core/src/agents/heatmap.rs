//! Landmark heatmaps, presence gating and arg-max extraction.
//!
//! A heatmap set has one row per landmark channel (16 tooth slots x 5
//! groups) and `N + 1` columns: one per cloud point plus a trailing null
//! column. Gating scales the real columns of slot `t` by `p_t` and its null
//! column by `1 - p_t`, so a tooth with low presence resolves to the null
//! point.
//!
//! # Heatmap file layout
//!
//! Binary container, little-endian:
//!
//! | offset            | size            | field                                  |
//! |-------------------|-----------------|----------------------------------------|
//! | 0                 | 4               | magic `b"OPHM"`                        |
//! | 4                 | 2               | `u16` format version (1)               |
//! | 6                 | 2               | `u16` flags (0)                        |
//! | 8                 | 4               | `u32` channel count K (80)             |
//! | 12                | 4               | `u32` column count N + 1               |
//! | 16                | 128             | 16 x `f64` presence, slot order        |
//! | 144               | 8 K (N + 1)     | `f64` values, row-major                |
//!
//! The JSON form carries the same content:
//! `{"schema_version":1,"channels":80,"columns":N+1,"presence":[..16],"values":[[..N+1],..]}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dental::{LandmarkGroup, PointCloud, SCHEMA_VERSION, TEETH_PER_ARCH};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const LANDMARK_GROUPS: usize = 5;
pub const LANDMARK_CHANNELS: usize = TEETH_PER_ARCH * LANDMARK_GROUPS;

const MAGIC: &[u8; 4] = b"OPHM";
const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 16 + 8 * TEETH_PER_ARCH;

/// Row index of landmark `group` of tooth `slot` (1-based).
pub fn channel_index(slot: usize, group: LandmarkGroup) -> usize {
    (slot - 1) * LANDMARK_GROUPS + group.index()
}

/// `K x (N + 1)` non-negative heatmap values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSet {
    columns: usize,
    values: Vec<f64>,
}

impl HeatmapSet {
    pub fn new(columns: usize, values: Vec<f64>) -> Result<Self> {
        if columns < 2 {
            return Err(Error::invalid("heatmaps need at least one point column and the null column"));
        }
        if values.len() != LANDMARK_CHANNELS * columns {
            return Err(Error::invalid(format!(
                "expected {} x {} heatmap values, got {}",
                LANDMARK_CHANNELS,
                columns,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("heatmap value {v} is not finite and non-negative")));
        }
        Ok(Self { columns, values })
    }

    pub fn zeros(columns: usize) -> Result<Self> {
        Self::new(columns, vec![0.0; LANDMARK_CHANNELS * columns])
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != LANDMARK_CHANNELS {
            return Err(Error::invalid(format!("expected {LANDMARK_CHANNELS} heatmap rows, got {}", rows.len())));
        }
        let columns = rows[0].len();
        if rows.iter().any(|r| r.len() != columns) {
            return Err(Error::invalid("heatmap rows have unequal lengths"));
        }
        Self::new(columns, rows.into_iter().flatten().collect())
    }

    pub fn channels(&self) -> usize {
        LANDMARK_CHANNELS
    }

    /// `N + 1`.
    pub fn columns(&self) -> usize {
        self.columns
    }

    /// Index of the null column.
    pub fn null_column(&self) -> usize {
        self.columns - 1
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.values[channel * self.columns..(channel + 1) * self.columns]
    }

    pub fn row_mut(&mut self, channel: usize) -> &mut [f64] {
        &mut self.values[channel * self.columns..(channel + 1) * self.columns]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.columns, self.values.iter().map(|v| v * k).collect())
    }
}

/// Presence probability for each of the 16 slots of one arch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PresenceVector([f64; TEETH_PER_ARCH]);

impl PresenceVector {
    pub fn new(p: [f64; TEETH_PER_ARCH]) -> Result<Self> {
        if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("presence probability {v} outside [0, 1]")));
        }
        Ok(Self(p))
    }

    pub fn all_present() -> Self {
        Self([1.0; TEETH_PER_ARCH])
    }

    /// Probability for 1-based slot `slot`.
    pub fn get(&self, slot: usize) -> f64 {
        self.0[slot - 1]
    }

    pub fn as_array(&self) -> &[f64; TEETH_PER_ARCH] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for PresenceVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        let arr: [f64; TEETH_PER_ARCH] = v
            .try_into()
            .map_err(|v: Vec<f64>| Error::invalid(format!("presence vector needs 16 entries, got {}", v.len())))?;
        Self::new(arr)
    }
}

impl From<PresenceVector> for Vec<f64> {
    fn from(p: PresenceVector) -> Self {
        p.0.to_vec()
    }
}

/// Null point `c + (m_b / 2) * (0, 1, 0)`, with `c` the cloud centroid and
/// `m_b` the longest bounding-box edge.
pub fn null_point(cloud: &PointCloud) -> Vec3 {
    let (lo, hi) = cloud.bounds();
    let edge = hi - lo;
    let m_b = edge.x.max(edge.y).max(edge.z);
    cloud.centroid() + Vec3::new(0.0, m_b / 2.0, 0.0)
}

/// Presence gating: real columns of slot `t` scaled by `p_t`, the null column
/// by `1 - p_t`.
pub fn char_condition(raw: &HeatmapSet, presence: &PresenceVector) -> HeatmapSet {
    let mut out = raw.clone();
    let null = raw.null_column();
    for slot in 1..=TEETH_PER_ARCH {
        let p = presence.get(slot);
        for g in LandmarkGroup::ALL {
            let row = out.row_mut(channel_index(slot, g));
            for v in &mut row[..null] {
                *v *= p;
            }
            row[null] *= 1.0 - p;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractedLandmark {
    pub position: Vec3,
    /// Arg-max column; equals `N` for the null point.
    pub column: usize,
    pub is_null: bool,
}

/// Arg-max point of every channel; ties go to the lowest column.
pub fn extract_landmarks(
    conditioned: &HeatmapSet,
    cloud: &PointCloud,
    null: Vec3,
) -> Result<BTreeMap<(usize, LandmarkGroup), ExtractedLandmark>> {
    if conditioned.columns() != cloud.len() + 1 {
        return Err(Error::invalid(format!(
            "heatmaps have {} columns for a cloud of {} points",
            conditioned.columns(),
            cloud.len()
        )));
    }
    let mut out = BTreeMap::new();
    for slot in 1..=TEETH_PER_ARCH {
        for g in LandmarkGroup::ALL {
            let row = conditioned.row(channel_index(slot, g));
            let mut best = 0;
            for (i, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = i;
                }
            }
            let is_null = best == conditioned.null_column();
            let position = if is_null { null } else { cloud.points()[best] };
            out.insert((slot, g), ExtractedLandmark { position, column: best, is_null });
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct HeatmapJson {
    #[serde(default = "default_schema")]
    schema_version: u32,
    channels: usize,
    columns: usize,
    presence: PresenceVector,
    values: Vec<Vec<f64>>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

/// Heatmaps plus presence, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapFile {
    pub presence: PresenceVector,
    pub heatmaps: HeatmapSet,
}

impl HeatmapFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.heatmaps.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(LANDMARK_CHANNELS as u32).to_le_bytes());
        out.extend_from_slice(&(self.heatmaps.columns as u32).to_le_bytes());
        for p in self.presence.as_array() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for v in &self.heatmaps.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing OPHM header".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported heatmap format version {version}")));
        }
        let channels = u32_at(8) as usize;
        let columns = u32_at(12) as usize;
        if channels != LANDMARK_CHANNELS {
            return Err(Error::Format(format!("expected {LANDMARK_CHANNELS} channels, found {channels}")));
        }
        let expected = HEADER_LEN + 8 * channels * columns;
        if bytes.len() != expected {
            return Err(Error::Format(format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let mut presence = [0.0; TEETH_PER_ARCH];
        for (i, p) in presence.iter_mut().enumerate() {
            *p = f64_at(16 + 8 * i);
        }
        let values = (0..channels * columns).map(|i| f64_at(HEADER_LEN + 8 * i)).collect();
        Ok(Self { presence: PresenceVector::new(presence)?, heatmaps: HeatmapSet::new(columns, values)? })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = HeatmapJson {
            schema_version: SCHEMA_VERSION,
            channels: LANDMARK_CHANNELS,
            columns: self.heatmaps.columns,
            presence: self.presence,
            values: self.heatmaps.values.chunks(self.heatmaps.columns).map(<[f64]>::to_vec).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: HeatmapJson = serde_json::from_str(s)?;
        if doc.channels != LANDMARK_CHANNELS {
            return Err(Error::Format(format!("expected {LANDMARK_CHANNELS} channels, found {}", doc.channels)));
        }
        let heatmaps = HeatmapSet::from_rows(doc.values)?;
        if heatmaps.columns != doc.columns {
            return Err(Error::Format("declared column count does not match the rows".into()));
        }
        Ok(Self { presence: doc.presence, heatmaps })
    }

    /// Reads either form; the binary one is recognised by its magic.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Self::from_bytes(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?;
            Self::from_json(&text)
        }
    }
}
