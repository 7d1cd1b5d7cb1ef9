//! Fusion of the two agents' tooth states.
//!
//! Three modes:
//!
//! - **Parallel**: both agents run concurrently; teeth found by both are
//!   fused as `c = w1 * c1 + w2 * c2`, orientation `slerp(q1, q2, w2)`,
//!   confidence `w1 * conf1 + w2 * conf2`, landmarks from agent 2.
//! - **Sequential**: agent 2 runs first; agent 1 runs once, only if some
//!   tooth has agent-2 confidence below the threshold, and those teeth are
//!   fused with the boosted agent-1 weight.
//! - **Single agent**: one agent's output is returned unchanged.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentId, AgentOutput, ToothEstimator};
use crate::dental::{Arch, ArchState, FdiTooth, PointCloud, ToothState};
use crate::error::{Error, Result};
use crate::geometry::slerp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Parallel,
    Sequential,
    SingleAgent(AgentId),
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionMode::Parallel => f.write_str("parallel"),
            FusionMode::Sequential => f.write_str("sequential"),
            FusionMode::SingleAgent(a) => write!(f, "{a}"),
        }
    }
}

impl FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parallel" => Ok(FusionMode::Parallel),
            "sequential" => Ok(FusionMode::Sequential),
            "agent1" | "segmentation" => Ok(FusionMode::SingleAgent(AgentId::Segmentation)),
            "agent2" | "landmark" => Ok(FusionMode::SingleAgent(AgentId::Landmark)),
            other => Err(Error::invalid(format!("unknown fusion mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    #[serde(with = "mode_str")]
    pub mode: FusionMode,
    pub w1: f64,
    pub w2: f64,
    #[serde(rename = "threshold")]
    pub sequential_threshold: f64,
    pub boosted_w1: f64,
}

mod mode_str {
    use super::FusionMode;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &FusionMode, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(m)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FusionMode, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { mode: FusionMode::Parallel, w1: 0.4, w2: 0.6, sequential_threshold: 0.5, boosted_w1: 0.8 }
    }
}

impl FusionConfig {
    pub fn with_mode(mode: FusionMode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn with_weights(mut self, w1: f64, w2: f64) -> Self {
        self.w1 = w1;
        self.w2 = w2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.w1) && unit(self.w2) && unit(self.sequential_threshold) && unit(self.boosted_w1)) {
            return Err(Error::invalid("fusion weights and threshold must lie in [0, 1]"));
        }
        if (self.w1 + self.w2 - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("fusion weights sum to {}, expected 1", self.w1 + self.w2)));
        }
        Ok(())
    }
}

/// Which agent(s) contributed to a fused tooth, and with what weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToothWeights {
    pub w1: f64,
    pub w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRun {
    pub agent: AgentId,
    pub ok: bool,
    pub elapsed_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: String,
    pub runs: Vec<AgentRun>,
    pub weights: BTreeMap<FdiTooth, ToothWeights>,
    /// Set when a requested agent failed and the result relies on fewer sources.
    pub degraded: bool,
}

impl Provenance {
    fn new(mode: FusionMode) -> Self {
        Self { mode: mode.to_string(), runs: Vec::new(), weights: BTreeMap::new(), degraded: false }
    }

    pub fn invoked(&self, agent: AgentId) -> bool {
        self.runs.iter().any(|r| r.agent == agent)
    }

    fn record(&mut self, agent: AgentId, result: &Result<AgentOutput>, elapsed: Duration) {
        self.runs.push(AgentRun {
            agent,
            ok: result.is_ok(),
            elapsed_ms: elapsed.as_secs_f64() * 1e3,
            error: result.as_ref().err().map(|e| e.to_string()),
        });
    }
}

fn fuse_pair(t1: &ToothState, t2: &ToothState, w1: f64, w2: f64) -> Result<ToothState> {
    let mut out = t2.clone();
    out.centroid = t1.centroid * w1 + t2.centroid * w2;
    out.orientation = slerp(&t1.orientation, &t2.orientation, w2)?;
    out.confidence = (w1 * t1.confidence + w2 * t2.confidence).clamp(0.0, 1.0);
    out.extents = if w1 >= w2 { t1.extents } else { t2.extents };
    out.degraded = t1.degraded || t2.degraded;
    Ok(out)
}

fn pass_through(t: &ToothState, weight: f64) -> ToothState {
    let mut out = t.clone();
    out.confidence = (t.confidence * weight).clamp(0.0, 1.0);
    out
}

/// Confidence-weighted fusion of two outputs covering the same arch.
pub fn fuse_parallel(a1: &AgentOutput, a2: &AgentOutput, cfg: &FusionConfig) -> Result<ArchState> {
    Ok(fuse_parallel_with_weights(a1, a2, cfg)?.0)
}

fn fuse_parallel_with_weights(
    a1: &AgentOutput,
    a2: &AgentOutput,
    cfg: &FusionConfig,
) -> Result<(ArchState, BTreeMap<FdiTooth, ToothWeights>)> {
    cfg.validate()?;
    let arch = a1.arch.arch();
    if a2.arch.arch() != arch {
        return Err(Error::invalid("cannot fuse outputs from different arches"));
    }
    let (w1, w2) = (cfg.w1, cfg.w2);
    let mut fused = ArchState::empty(arch);
    let mut weights = BTreeMap::new();
    let teeth: std::collections::BTreeSet<FdiTooth> = a1.arch.teeth().chain(a2.arch.teeth()).map(|t| t.fdi).collect();
    for fdi in teeth {
        let t1 = a1.arch.get(fdi).filter(|t| t.present);
        let t2 = a2.arch.get(fdi);
        let (tooth, w) = match (t1, t2) {
            (Some(t1), Some(t2)) if t2.present => (fuse_pair(t1, t2, w1, w2)?, ToothWeights { w1, w2 }),
            (Some(t1), _) => (pass_through(t1, w1), ToothWeights { w1, w2: 0.0 }),
            (None, Some(t2)) if t2.present => (pass_through(t2, w2), ToothWeights { w1: 0.0, w2 }),
            // absent in both: keep agent 2's presence estimate
            (None, Some(t2)) => (t2.clone(), ToothWeights { w1: 0.0, w2: 0.0 }),
            (None, None) => continue,
        };
        weights.insert(fdi, w);
        fused.insert(tooth)?;
    }
    Ok((fused, weights))
}

/// Sequential refinement. Returns the fused arch and whether agent 1 ran.
pub fn fuse_sequential(
    a2: &AgentOutput,
    agent1: &dyn ToothEstimator,
    cloud: &PointCloud,
    cfg: &FusionConfig,
) -> Result<(ArchState, Provenance)> {
    cfg.validate()?;
    let mut prov = Provenance::new(FusionMode::Sequential);
    prov.runs.push(AgentRun { agent: a2.agent, ok: true, elapsed_ms: a2.elapsed.as_secs_f64() * 1e3, error: None });
    sequential_refine(a2, agent1, cloud, cfg, &mut prov).map(|arch| (arch, prov))
}

fn sequential_refine(
    a2: &AgentOutput,
    agent1: &dyn ToothEstimator,
    cloud: &PointCloud,
    cfg: &FusionConfig,
    prov: &mut Provenance,
) -> Result<ArchState> {
    let arch = a2.arch.arch();
    let low: Vec<FdiTooth> =
        a2.arch.teeth().filter(|t| t.confidence < cfg.sequential_threshold).map(|t| t.fdi).collect();
    for t in a2.arch.teeth() {
        prov.weights.insert(t.fdi, ToothWeights { w1: 0.0, w2: 1.0 });
    }
    if low.is_empty() {
        return Ok(a2.arch.clone());
    }

    let start = std::time::Instant::now();
    let a1 = agent1.infer(cloud, arch);
    prov.record(agent1.id(), &a1, start.elapsed());

    let (bw1, bw2) = (cfg.boosted_w1, 1.0 - cfg.boosted_w1);
    let mut out = ArchState::empty(arch);
    let a1 = match a1 {
        Ok(a1) => Some(a1),
        Err(_) => {
            prov.degraded = true;
            None
        }
    };
    for t2 in a2.arch.teeth() {
        if !low.contains(&t2.fdi) {
            out.insert(t2.clone())?;
            continue;
        }
        let tooth = match &a1 {
            None => ToothState { degraded: true, ..t2.clone() },
            Some(a1) => match a1.arch.get(t2.fdi).filter(|t| t.present) {
                Some(t1) if t2.present => {
                    prov.weights.insert(t2.fdi, ToothWeights { w1: bw1, w2: bw2 });
                    fuse_pair(t1, t2, bw1, bw2)?
                }
                Some(t1) => {
                    prov.weights.insert(t2.fdi, ToothWeights { w1: bw1, w2: 0.0 });
                    pass_through(t1, bw1)
                }
                None => t2.clone(),
            },
        };
        out.insert(tooth)?;
    }
    // teeth only agent 1 found
    if let Some(a1) = &a1 {
        for t1 in a1.arch.present_teeth() {
            if a2.arch.get(t1.fdi).is_none() {
                prov.weights.insert(t1.fdi, ToothWeights { w1: bw1, w2: 0.0 });
                out.insert(pass_through(t1, bw1))?;
            }
        }
    }
    Ok(out)
}

/// Dispatches a cloud to the configured fusion mode. Holds configuration
/// only, so one instance can be shared between request handlers.
#[derive(Debug, Clone, Default)]
pub struct Orchestrator {
    config: FusionConfig,
}

impl Orchestrator {
    pub fn new(config: FusionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn run(
        &self,
        agent1: &dyn ToothEstimator,
        agent2: &dyn ToothEstimator,
        cloud: &PointCloud,
        arch: Arch,
    ) -> Result<(ArchState, Provenance)> {
        let cfg = &self.config;
        let mut prov = Provenance::new(cfg.mode);
        let timed = |agent: &dyn ToothEstimator| {
            let start = std::time::Instant::now();
            let r = agent.infer(cloud, arch);
            (r, start.elapsed())
        };
        match cfg.mode {
            FusionMode::SingleAgent(which) => {
                let agent = if which == AgentId::Segmentation { agent1 } else { agent2 };
                let (r, dt) = timed(agent);
                prov.record(agent.id(), &r, dt);
                let out = r.map_err(|e| Error::Pipeline(format!("{which} failed: {e}")))?;
                for t in out.arch.teeth() {
                    let w = if which == AgentId::Segmentation { (1.0, 0.0) } else { (0.0, 1.0) };
                    prov.weights.insert(t.fdi, ToothWeights { w1: w.0, w2: w.1 });
                }
                Ok((out.arch, prov))
            }
            FusionMode::Parallel => {
                let ((r1, dt1), (r2, dt2)) = std::thread::scope(|s| {
                    let h1 = s.spawn(|| timed(agent1));
                    let r2 = timed(agent2);
                    (h1.join().expect("agent thread panicked"), r2)
                });
                prov.record(agent1.id(), &r1, dt1);
                prov.record(agent2.id(), &r2, dt2);
                match (r1, r2) {
                    (Ok(a1), Ok(a2)) => {
                        let (arch, weights) = fuse_parallel_with_weights(&a1, &a2, cfg)?;
                        prov.weights = weights;
                        Ok((arch, prov))
                    }
                    (Ok(only), Err(_)) | (Err(_), Ok(only)) => {
                        prov.degraded = true;
                        let w = if only.agent == AgentId::Segmentation { (1.0, 0.0) } else { (0.0, 1.0) };
                        for t in only.arch.teeth() {
                            prov.weights.insert(t.fdi, ToothWeights { w1: w.0, w2: w.1 });
                        }
                        Ok((only.arch, prov))
                    }
                    (Err(e1), Err(e2)) => Err(Error::Pipeline(format!("both agents failed: {e1}; {e2}"))),
                }
            }
            FusionMode::Sequential => {
                let (r2, dt2) = timed(agent2);
                prov.record(agent2.id(), &r2, dt2);
                match r2 {
                    Ok(a2) => {
                        let arch = sequential_refine(&a2, agent1, cloud, cfg, &mut prov)?;
                        Ok((arch, prov))
                    }
                    Err(e2) => {
                        // agent 2 unavailable: fall back to agent 1 alone
                        prov.degraded = true;
                        let (r1, dt1) = timed(agent1);
                        prov.record(agent1.id(), &r1, dt1);
                        let a1 = r1.map_err(|e1| Error::Pipeline(format!("both agents failed: {e2}; {e1}")))?;
                        for t in a1.arch.teeth() {
                            prov.weights.insert(t.fdi, ToothWeights { w1: 1.0, w2: 0.0 });
                        }
                        Ok((a1.arch, prov))
                    }
                }
            }
        }
    }
}
