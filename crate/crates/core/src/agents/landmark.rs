use std::time::Instant;

use super::heatmap::{char_condition, extract_landmarks, null_point};
use super::source::HeatmapSource;
use super::{AgentId, AgentOutput, ToothEstimator};
use crate::dental::{Arch, ArchState, FdiTooth, Landmark, LandmarkGroup, PointCloud, ToothState, TEETH_PER_ARCH};
use crate::error::{Error, Result};
use crate::geometry::{principal_axes, Vec3};

/// Landmark estimator: presence-gated heatmaps, arg-max landmarks, one tooth
/// state per slot.
pub struct LandmarkAgent {
    source: Box<dyn HeatmapSource>,
    presence_threshold: f64,
}

impl LandmarkAgent {
    pub const DEFAULT_PRESENCE_THRESHOLD: f64 = 0.5;

    pub fn new(source: impl HeatmapSource + 'static) -> Self {
        Self { source: Box::new(source), presence_threshold: Self::DEFAULT_PRESENCE_THRESHOLD }
    }

    pub fn with_presence_threshold(mut self, t: f64) -> Self {
        self.presence_threshold = t;
        self
    }
}

impl ToothEstimator for LandmarkAgent {
    fn id(&self) -> AgentId {
        AgentId::Landmark
    }

    fn infer(&self, cloud: &PointCloud, arch: Arch) -> Result<AgentOutput> {
        let start = Instant::now();
        let (raw, presence) = self
            .source
            .heatmaps(cloud, arch)
            .map_err(|e| Error::AgentUnavailable { agent: AgentId::Landmark.to_string(), reason: e.to_string() })?;
        let nullp = null_point(cloud);
        let conditioned = char_condition(&raw, &presence);
        let extracted = extract_landmarks(&conditioned, cloud, nullp)?;

        let mut state = ArchState::empty(arch);
        for slot in 1..=TEETH_PER_ARCH {
            let fdi = FdiTooth::from_slot(arch, slot)?;
            let p = presence.get(slot);
            let landmarks: Vec<Landmark> = LandmarkGroup::ALL
                .iter()
                .map(|g| (g, extracted[&(slot, *g)]))
                .filter(|(_, e)| !e.is_null)
                .map(|(g, e)| Landmark { group: *g, position: e.position })
                .collect();
            let tooth = if p >= self.presence_threshold && !landmarks.is_empty() {
                let positions: Vec<Vec3> = landmarks.iter().map(|l| l.position).collect();
                let axes = principal_axes(&positions)?;
                let mut t = ToothState::new(fdi, axes.centroid, axes.orientation(), p);
                t.landmarks = landmarks;
                t.extents = axes.extents;
                t
            } else {
                ToothState::absent(fdi, nullp, p)
            };
            state.insert(tooth)?;
        }
        Ok(AgentOutput::new(AgentId::Landmark, state, start.elapsed()))
    }
}
