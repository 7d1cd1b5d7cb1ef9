//! Aligner-count estimation and the multi-frame 6-DoF simulator.
//!
//! A plan is split over `A` aligners with `r` frames each, giving `F = A r`
//! steps and `F + 1` frames (frame 0 is the scan). Extruding teeth wait until
//! `t0` and then catch up linearly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dental::{ArchState, FdiTooth, MovementPlan, ToothMovement, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::geometry::{euler_to_quaternion, slerp, UnitQuaternion, Vec3};

/// Slack used to keep exact multiples of the budget (7.0 / 0.25) from
/// rounding up to an extra aligner.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StagingConfig {
    pub delta_trans: f64,
    pub delta_rot: f64,
    pub frames_per_aligner: u32,
    pub min_aligners: u32,
    pub extrusion_start: f64,
    /// Defer only the vertical component of extruding teeth instead of the
    /// whole movement.
    pub defer_vertical_only: bool,
    /// Count aligners on over-engineered movements.
    pub over_engineer_for_count: bool,
    pub over_engineer: f64,
}

impl Default for StagingConfig {
    fn default() -> Self {
        Self {
            delta_trans: 0.25,
            delta_rot: 2.0,
            frames_per_aligner: 3,
            min_aligners: 20,
            extrusion_start: 0.6,
            defer_vertical_only: false,
            over_engineer_for_count: false,
            over_engineer: 1.3,
        }
    }
}

impl StagingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_trans > 0.0 && self.delta_rot > 0.0) {
            return Err(Error::Config("staging budgets must be positive".into()));
        }
        if self.frames_per_aligner == 0 || self.min_aligners == 0 {
            return Err(Error::Config("frames_per_aligner and min_aligners must be positive".into()));
        }
        if !(self.extrusion_start > 0.0 && self.extrusion_start < 1.0) {
            return Err(Error::Config("extrusion_start must lie in (0, 1)".into()));
        }
        if !(self.over_engineer.is_finite() && self.over_engineer > 0.0) {
            return Err(Error::Config("over_engineer must be positive".into()));
        }
        Ok(())
    }
}

pub fn aligner_count(plan: &MovementPlan, cfg: &StagingConfig) -> u32 {
    let k = if cfg.over_engineer_for_count { cfg.over_engineer } else { 1.0 };
    let (mut max_t, mut max_r) = (0.0f64, 0.0f64);
    for (_, m) in plan.iter() {
        max_t = max_t.max(m.translation().norm() * k);
        max_r = max_r.max(m.rotation().norm() * k);
    }
    let steps = |x: f64, d: f64| (x / d - CEIL_SLACK).ceil().max(0.0) as u32;
    steps(max_t, cfg.delta_trans).max(steps(max_r, cfg.delta_rot)).max(cfg.min_aligners)
}

/// Effective progress of a tooth at normalised time `t`.
pub fn t_eff(tz: f64, t: f64, cfg: &StagingConfig) -> f64 {
    if t >= 1.0 {
        return 1.0;
    }
    if tz < 0.0 {
        let t0 = cfg.extrusion_start;
        if t < t0 {
            0.0
        } else {
            (t - t0) / (1.0 - t0)
        }
    } else {
        t
    }
}

/// Progress of the horizontal/rotational part and of the vertical part.
fn progress(m: &ToothMovement, t: f64, cfg: &StagingConfig) -> (f64, f64) {
    let te = t_eff(m.tz, t, cfg);
    if cfg.defer_vertical_only && m.is_extrusion() {
        (t.min(1.0), te)
    } else {
        (te, te)
    }
}

fn offset(m: &ToothMovement, t: f64, cfg: &StagingConfig) -> Vec3 {
    let (h, v) = progress(m, t, cfg);
    Vec3::new(h * m.tx, h * m.ty, v * m.tz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub centroid: Vec3,
    #[serde(rename = "orientation_wxyz")]
    pub orientation: UnitQuaternion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentFrame {
    pub index: u32,
    pub t: f64,
    pub poses: BTreeMap<FdiTooth, Pose>,
}

/// Movement realised by one tooth during one aligner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageIncrement {
    pub displacement_mm: f64,
    /// Rotation as the Euler-vector norm times the progress fraction, the
    /// same measure the aligner count divides.
    pub rotation_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagingSummary {
    pub aligner_count: u32,
    pub frame_count: u32,
    pub stage_max_displacement: Vec<f64>,
    pub stage_max_rotation: Vec<f64>,
    pub deferred_teeth: Vec<FdiTooth>,
}

impl StagingSummary {
    /// Number of stages whose maxima stay within both budgets.
    pub fn stages_within_budget(&self, cfg: &StagingConfig) -> usize {
        self.stage_max_displacement
            .iter()
            .zip(&self.stage_max_rotation)
            .filter(|(d, r)| **d <= cfg.delta_trans + 1e-9 && **r <= cfg.delta_rot + 1e-9)
            .count()
    }
}

fn boundary_t(k: u32, aligners: u32) -> f64 {
    if k >= aligners {
        1.0
    } else {
        k as f64 / aligners as f64
    }
}

/// Per-tooth, per-aligner movement computed in closed form.
pub fn stage_increments(plan: &MovementPlan, cfg: &StagingConfig) -> BTreeMap<FdiTooth, Vec<StageIncrement>> {
    let a = aligner_count(plan, cfg);
    plan.iter()
        .map(|(fdi, m)| {
            let omega = m.rotation().norm();
            let stages = (0..a)
                .map(|k| {
                    let (t0, t1) = (boundary_t(k, a), boundary_t(k + 1, a));
                    let d = offset(m, t1, cfg) - offset(m, t0, cfg);
                    let (h0, _) = progress(m, t0, cfg);
                    let (h1, _) = progress(m, t1, cfg);
                    StageIncrement { displacement_mm: d.norm(), rotation_deg: omega * (h1 - h0) }
                })
                .collect();
            (fdi, stages)
        })
        .collect()
}

fn summarize(
    aligners: u32,
    cfg: &StagingConfig,
    plan: &MovementPlan,
    displacement: impl Fn(u32) -> f64,
    rotation: impl Fn(u32) -> f64,
) -> StagingSummary {
    StagingSummary {
        aligner_count: aligners,
        frame_count: aligners * cfg.frames_per_aligner,
        stage_max_displacement: (0..aligners).map(displacement).collect(),
        stage_max_rotation: (0..aligners).map(rotation).collect(),
        deferred_teeth: plan.iter().filter(|(_, m)| m.is_extrusion()).map(|(f, _)| f).collect(),
    }
}

/// Summary without materialising frames.
pub fn staging_summary_only(plan: &MovementPlan, cfg: &StagingConfig) -> StagingSummary {
    let inc = stage_increments(plan, cfg);
    let a = aligner_count(plan, cfg);
    let max_over = |k: u32, f: fn(&StageIncrement) -> f64| inc.values().map(|s| f(&s[k as usize])).fold(0.0, f64::max);
    summarize(a, cfg, plan, |k| max_over(k, |s| s.displacement_mm), |k| max_over(k, |s| s.rotation_deg))
}

/// Materialises all `F + 1` frames. Present teeth outside the plan are
/// carried along unchanged.
pub fn generate_frames(
    arch: &ArchState,
    plan: &MovementPlan,
    cfg: &StagingConfig,
) -> Result<(Vec<TreatmentFrame>, StagingSummary)> {
    cfg.validate()?;
    struct Track {
        c0: Vec3,
        q0: UnitQuaternion,
        target: UnitQuaternion,
        m: ToothMovement,
    }
    let mut tracks = BTreeMap::new();
    for (fdi, m) in plan.iter() {
        let tooth = arch
            .get(fdi)
            .filter(|t| t.present)
            .ok_or_else(|| Error::invalid(format!("tooth {fdi} is planned but absent from the arch")))?;
        if !m.is_finite() {
            return Err(Error::invalid(format!("tooth {fdi} has a non-finite movement")));
        }
        let q0 = tooth.orientation;
        let target = q0.compose(&euler_to_quaternion(m.rotation())?);
        tracks.insert(fdi, Track { c0: tooth.centroid, q0, target, m: *m });
    }
    for tooth in arch.present_teeth() {
        tracks.entry(tooth.fdi).or_insert(Track {
            c0: tooth.centroid,
            q0: tooth.orientation,
            target: tooth.orientation,
            m: ToothMovement::ZERO,
        });
    }

    let a = aligner_count(plan, cfg);
    let f = a * cfg.frames_per_aligner;
    let mut frames = Vec::with_capacity(f as usize + 1);
    for i in 0..=f {
        let t = if i == f { 1.0 } else { i as f64 / f as f64 };
        let mut poses = BTreeMap::new();
        for (fdi, tr) in &tracks {
            let (h, _) = progress(&tr.m, t, cfg);
            let pose = Pose { centroid: tr.c0 + offset(&tr.m, t, cfg), orientation: slerp(&tr.q0, &tr.target, h)? };
            poses.insert(*fdi, pose);
        }
        frames.push(TreatmentFrame { index: i, t, poses });
    }

    let r = cfg.frames_per_aligner as usize;
    let planned: Vec<(FdiTooth, f64)> = plan.iter().map(|(fdi, m)| (fdi, m.rotation().norm())).collect();
    let stage_disp = |k: u32| {
        let (p0, p1) = (&frames[k as usize * r].poses, &frames[(k as usize + 1) * r].poses);
        planned.iter().map(|(fdi, _)| p0[fdi].centroid.distance(p1[fdi].centroid)).fold(0.0, f64::max)
    };
    let stage_rot = |k: u32| {
        let (t0, t1) = (frames[k as usize * r].t, frames[(k as usize + 1) * r].t);
        planned
            .iter()
            .map(|(fdi, omega)| {
                let m = &tracks[fdi].m;
                omega * (progress(m, t1, cfg).0 - progress(m, t0, cfg).0)
            })
            .fold(0.0, f64::max)
    };
    let summary = summarize(a, cfg, plan, stage_disp, stage_rot);
    Ok((frames, summary))
}

#[derive(Serialize)]
struct FramesDocRef<'a> {
    schema_version: u32,
    aligners: u32,
    frames_per_aligner: u32,
    frames: &'a [TreatmentFrame],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub schema_version: u32,
    pub aligners: u32,
    pub frames_per_aligner: u32,
    pub frames: Vec<TreatmentFrame>,
}

impl FrameSequence {
    pub fn new(frames: Vec<TreatmentFrame>, summary: &StagingSummary, cfg: &StagingConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            aligners: summary.aligner_count,
            frames_per_aligner: cfg.frames_per_aligner,
            frames,
        }
    }
}

/// Serialises frames in the published frame-sequence layout.
pub fn frames_to_json(frames: &[TreatmentFrame], summary: &StagingSummary, cfg: &StagingConfig) -> Result<String> {
    let doc = FramesDocRef {
        schema_version: SCHEMA_VERSION,
        aligners: summary.aligner_count,
        frames_per_aligner: cfg.frames_per_aligner,
        frames,
    };
    Ok(serde_json::to_string(&doc)?)
}
