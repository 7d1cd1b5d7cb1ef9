//! The synchronous work behind create, rescore and the CLI: estimate an arch
//! from a scan when needed, then score and stage a plan.

use orthoplan_core::agents::{
    HeatmapFile, HeatmapSet, HeatmapSource, LandmarkAgent, PresenceVector, SegmentationAgent, StaticHeatmapSource,
};
use orthoplan_core::config::Config;
use orthoplan_core::dental::{Arch, ArchState, MovementPlan, PointCloud};
use orthoplan_core::orchestrator::{Orchestrator, Provenance};
use orthoplan_core::scoring::{CrowdingMetadata, ScoringEngine, TreatmentScore};
use orthoplan_core::staging::{generate_frames, FrameSequence, StagingConfig, StagingSummary};
use orthoplan_core::{Error, Result};

/// Shared, read-only engine state.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub engine: ScoringEngine,
    pub orchestrator: Orchestrator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub score: TreatmentScore,
    pub summary: StagingSummary,
    /// The serialized [`FrameSequence`], as stored and served.
    pub frames_json: Vec<u8>,
}

/// Used when a scan arrives without heatmaps: the landmark agent reports
/// itself unavailable and the orchestrator falls back.
struct NoHeatmaps;

impl HeatmapSource for NoHeatmaps {
    fn heatmaps(&self, _cloud: &PointCloud, _arch: Arch) -> Result<(HeatmapSet, PresenceVector)> {
        Err(Error::InvalidArgument("no heatmaps were supplied with the scan".into()))
    }
}

impl Pipeline {
    pub fn new(cfg: &Config) -> Result<Self> {
        Ok(Self {
            engine: ScoringEngine::new(cfg.scoring, cfg.staging)?,
            orchestrator: Orchestrator::new(cfg.orchestrator)?,
        })
    }

    pub fn staging(&self) -> &StagingConfig {
        &self.engine.staging
    }

    pub fn evaluate(
        &self,
        arch: &ArchState,
        plan: &MovementPlan,
        crowding: Option<&CrowdingMetadata>,
    ) -> Result<Evaluation> {
        let score = self.engine.score(plan, arch, crowding)?;
        let (frames, summary) = generate_frames(arch, plan, self.staging())?;
        let frames = FrameSequence::new(frames, &summary, self.staging());
        let frames_json = serde_json::to_vec(&frames)?;
        Ok(Evaluation { score, summary, frames_json })
    }

    /// Runs the configured agents on a scan.
    pub fn estimate(
        &self,
        cloud: &PointCloud,
        arch: Arch,
        heatmaps: Option<HeatmapFile>,
        seed: u64,
    ) -> Result<(ArchState, Provenance)> {
        let segmentation = SegmentationAgent::new().with_seed(seed);
        let landmark = match heatmaps {
            Some(h) => LandmarkAgent::new(StaticHeatmapSource(h)),
            None => LandmarkAgent::new(NoHeatmaps),
        };
        self.orchestrator.run(&segmentation, &landmark, cloud, arch)
    }
}
