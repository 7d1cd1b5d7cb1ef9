//! Tooth-state estimators.
//!
//! Both agents implement [`ToothEstimator`]: given a single-arch point cloud
//! they return one [`ToothState`](crate::dental::ToothState) per detected
//! tooth together with a per-tooth confidence.
//!
//! - [`SegmentationAgent`] groups points per tooth (from labels, or by
//!   clustering along the arch) and extracts a PCA frame per group.
//! - [`LandmarkAgent`] gates per-point landmark heatmaps with tooth presence
//!   probabilities and takes the arg-max point of every landmark channel.

mod heatmap;
mod landmark;
mod segmentation;
mod source;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dental::{Arch, ArchState, FdiTooth, PointCloud};
use crate::error::Result;

pub use heatmap::{
    channel_index, char_condition, extract_landmarks, null_point, ExtractedLandmark, HeatmapFile, HeatmapSet,
    PresenceVector, LANDMARK_CHANNELS, LANDMARK_GROUPS,
};
pub use landmark::LandmarkAgent;
pub use segmentation::{segmentation_confidence, SegmentationAgent};
pub use source::{FileHeatmapSource, HeatmapSource, OracleNoise, StaticHeatmapSource, SyntheticOracleSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentId {
    /// Segmentation / PCA estimator.
    #[serde(rename = "agent1")]
    Segmentation,
    /// Conditioned-heatmap landmark estimator.
    #[serde(rename = "agent2")]
    Landmark,
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Segmentation => f.write_str("agent1"),
            AgentId::Landmark => f.write_str("agent2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutput {
    pub agent: AgentId,
    pub arch: ArchState,
    pub per_tooth_confidence: BTreeMap<FdiTooth, f64>,
    pub elapsed: Duration,
}

impl AgentOutput {
    pub fn new(agent: AgentId, arch: ArchState, elapsed: Duration) -> Self {
        let per_tooth_confidence = arch.teeth().map(|t| (t.fdi, t.confidence)).collect();
        Self { agent, arch, per_tooth_confidence, elapsed }
    }

    pub fn confidence(&self, fdi: FdiTooth) -> Option<f64> {
        self.per_tooth_confidence.get(&fdi).copied()
    }
}

/// Shared contract of both agents. Implementations hold no mutable state, so
/// one instance can serve concurrent calls.
pub trait ToothEstimator: Send + Sync {
    fn id(&self) -> AgentId;

    fn infer(&self, cloud: &PointCloud, arch: Arch) -> Result<AgentOutput>;
}
