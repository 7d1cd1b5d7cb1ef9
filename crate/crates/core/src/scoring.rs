//! Composite biomechanical scoring.
//!
//! Six sub-scores are combined with fixed weights, then multiplied by
//! `0.85` per critical and `0.97` per warning finding. All movements are
//! over-engineered (scaled by 1.3) before evaluation.
//!
//! Sub-score formulas (the weights are fixed; these are engine choices):
//!
//! | sub-score      | value                                                               |
//! |----------------|---------------------------------------------------------------------|
//! | bio            | `100 * mean over (tooth, axis) of max(0, 1 - abs(m) / L)`           |
//! | staging        | `100 * fraction of aligners within both per-aligner budgets`        |
//! | attachments    | `100 * (1 - teeth needing attachments / present teeth)`             |
//! | ipr            | `100 * min(1, 0.5 mm * contacts / total overlap)`                   |
//! | occlusion      | `100 * (1 - mean left/right translation asymmetry / 2 mm)`          |
//! | predictability | `100 * mean eta over movement components, weighted by abs(m) / L`   |

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dental::{
    limits_for, validate_plan, ArchState, EtaTable, FdiTooth, MovementAxis, MovementPlan, ToothMovement, ToothType,
};
use crate::error::{Error, Result};
use crate::staging::{staging_summary_only, StagingConfig, StagingSummary};

pub const WEIGHT_BIO: f64 = 0.30;
pub const WEIGHT_STAGING: f64 = 0.20;
pub const WEIGHT_ATTACHMENTS: f64 = 0.15;
pub const WEIGHT_IPR: f64 = 0.10;
pub const WEIGHT_OCCLUSION: f64 = 0.10;
pub const WEIGHT_PREDICTABILITY: f64 = 0.15;

pub const WEIGHTS: [f64; 6] =
    [WEIGHT_BIO, WEIGHT_STAGING, WEIGHT_ATTACHMENTS, WEIGHT_IPR, WEIGHT_OCCLUSION, WEIGHT_PREDICTABILITY];

pub const CRITICAL_FACTOR: f64 = 0.85;
pub const WARNING_FACTOR: f64 = 0.97;

pub const EXTRUSION_OVER_LIMIT: &str = "EXTRUSION_OVER_LIMIT";
pub const EXTRUSION_LOW_PRED: &str = "EXTRUSION_LOW_PRED";
pub const SIMULTANEOUS_DISTALIZATION: &str = "SIMULTANEOUS_DISTALIZATION";
pub const AXIS_OVER_LIMIT: &str = "AXIS_OVER_LIMIT";
pub const ATTACHMENT_RECOMMENDED: &str = "ATTACHMENT_RECOMMENDED";

/// Codes allowed on critical and warning findings.
pub const FINDING_CATALOGUE: [&str; 4] =
    [EXTRUSION_OVER_LIMIT, EXTRUSION_LOW_PRED, SIMULTANEOUS_DISTALIZATION, AXIS_OVER_LIMIT];

/// Fails if the weight constants drift from summing to one.
pub fn check_weights() -> Result<()> {
    let sum: f64 = WEIGHTS.iter().sum();
    if sum != 1.0 {
        return Err(Error::Config(format!("composite weights sum to {sum}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Critical,
    Warning,
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: String,
    pub fdi: Option<FdiTooth>,
    pub message: String,
    pub principle: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Grade {
    A,
    B,
    C,
    D,
    F,
}

impl Grade {
    pub fn from_score(q: f64) -> Grade {
        if q >= 90.0 {
            Grade::A
        } else if q >= 75.0 {
            Grade::B
        } else if q >= 60.0 {
            Grade::C
        } else if q >= 40.0 {
            Grade::D
        } else {
            Grade::F
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubScores {
    pub bio: f64,
    pub staging: f64,
    pub attachments: f64,
    pub ipr: f64,
    pub occlusion: f64,
    pub predictability: f64,
}

impl SubScores {
    pub const PERFECT: SubScores = SubScores {
        bio: 100.0,
        staging: 100.0,
        attachments: 100.0,
        ipr: 100.0,
        occlusion: 100.0,
        predictability: 100.0,
    };

    pub fn uniform(v: f64) -> Self {
        SubScores { bio: v, staging: v, attachments: v, ipr: v, occlusion: v, predictability: v }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.bio, self.staging, self.attachments, self.ipr, self.occlusion, self.predictability]
    }

    pub fn weighted_sum(&self) -> f64 {
        self.as_array().iter().zip(WEIGHTS).map(|(s, w)| s * w).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentScore {
    pub sub_scores: SubScores,
    pub composite_raw: f64,
    pub composite: f64,
    pub grade: Grade,
    pub findings: Vec<Finding>,
    pub v1_score: f64,
}

impl TreatmentScore {
    pub fn count(&self, severity: Severity) -> usize {
        self.findings.iter().filter(|f| f.severity == severity).count()
    }

    pub fn has_critical(&self) -> bool {
        self.count(Severity::Critical) > 0
    }
}

/// Interproximal overlap between two neighbouring teeth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactOverlap {
    pub mesial: FdiTooth,
    pub distal: FdiTooth,
    pub overlap_mm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrowdingMetadata {
    pub contacts: Vec<ContactOverlap>,
}

impl CrowdingMetadata {
    pub fn total_overlap(&self) -> f64 {
        self.contacts.iter().map(|c| c.overlap_mm.max(0.0)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub over_engineer: f64,
    pub extrusion_critical_mm: f64,
    pub distalization_molars: usize,
    pub distalization_norm_mm: f64,
    pub attachment_rotation_deg: f64,
    pub attachment_extrusion_mm: f64,
    pub ipr_per_contact_mm: f64,
    pub occlusion_norm_mm: f64,
    /// Emit informational attachment findings.
    pub attachment_findings: bool,
    pub eta: EtaTable,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            over_engineer: 1.3,
            extrusion_critical_mm: 1.5,
            distalization_molars: 3,
            distalization_norm_mm: 1.5,
            attachment_rotation_deg: 15.0,
            attachment_extrusion_mm: 0.5,
            ipr_per_contact_mm: 0.5,
            occlusion_norm_mm: 2.0,
            attachment_findings: true,
            eta: EtaTable::default(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.over_engineer,
            self.extrusion_critical_mm,
            self.distalization_norm_mm,
            self.attachment_rotation_deg,
            self.attachment_extrusion_mm,
            self.ipr_per_contact_mm,
            self.occlusion_norm_mm,
        ];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Config("scoring constants must be positive".into()));
        }
        self.eta.validate()
    }
}

pub fn over_engineer(m: &ToothMovement, factor: f64) -> ToothMovement {
    m.scaled(factor)
}

fn axis_ratios(fdi: FdiTooth, m: &ToothMovement) -> [(MovementAxis, f64, f64); 6] {
    let limits = limits_for(fdi.tooth_type());
    MovementAxis::ALL.map(|axis| {
        let v = axis.value(m);
        (axis, v, axis.limit(&limits, v))
    })
}

fn bio_mean(plan: &MovementPlan, factor: f64) -> f64 {
    if plan.is_empty() {
        return 100.0;
    }
    let mut sum = 0.0;
    for (fdi, m) in plan.iter() {
        let m = over_engineer(m, factor);
        for (_, v, limit) in axis_ratios(fdi, &m) {
            sum += (1.0 - v.abs() / limit).max(0.0);
        }
    }
    100.0 * sum / (plan.len() * 6) as f64
}

/// Legacy single-number score: the per-axis limit ratio averaged over the plan.
pub fn v1_score(plan: &MovementPlan, cfg: &ScoringConfig) -> f64 {
    bio_mean(plan, cfg.over_engineer)
}

fn needs_attachment(fdi: FdiTooth, m: &ToothMovement, cfg: &ScoringConfig) -> bool {
    let rounded = matches!(fdi.tooth_type(), ToothType::Canine | ToothType::Premolar);
    (rounded && m.rz.abs() > cfg.attachment_rotation_deg) || -m.tz > cfg.attachment_extrusion_mm
}

pub fn evaluate_principles(plan: &MovementPlan, cfg: &ScoringConfig) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut distalizing = 0;
    for (fdi, raw) in plan.iter() {
        let m = over_engineer(raw, cfg.over_engineer);
        if m.tz < 0.0 {
            let ext = -m.tz;
            if ext > cfg.extrusion_critical_mm {
                out.push(Finding {
                    severity: Severity::Critical,
                    code: EXTRUSION_OVER_LIMIT.into(),
                    fdi: Some(fdi),
                    message: format!(
                        "extrusion of {ext:.2} mm (over-engineered) exceeds {:.1} mm",
                        cfg.extrusion_critical_mm
                    ),
                    principle: Some(1),
                });
            }
            out.push(Finding {
                severity: Severity::Warning,
                code: EXTRUSION_LOW_PRED.into(),
                fdi: Some(fdi),
                message: format!("extrusion is push-limited, predictability {:.2}", cfg.eta.extrusion),
                principle: Some(1),
            });
        }
        for (axis, v, limit) in axis_ratios(fdi, &m) {
            if axis == MovementAxis::Tz && v < 0.0 {
                continue;
            }
            if v.abs() > limit {
                out.push(Finding {
                    severity: Severity::Warning,
                    code: AXIS_OVER_LIMIT.into(),
                    fdi: Some(fdi),
                    message: format!(
                        "{} of {:.2} exceeds the {:?} limit {limit}",
                        axis.label(),
                        v.abs(),
                        fdi.tooth_type()
                    ),
                    principle: None,
                });
            }
        }
        if fdi.tooth_type() == ToothType::Molar && m.translation().norm() > cfg.distalization_norm_mm {
            distalizing += 1;
        }
        if cfg.attachment_findings && needs_attachment(fdi, &m, cfg) {
            out.push(Finding {
                severity: Severity::Info,
                code: ATTACHMENT_RECOMMENDED.into(),
                fdi: Some(fdi),
                message: "attachment recommended".into(),
                principle: None,
            });
        }
    }
    if distalizing >= cfg.distalization_molars {
        out.push(Finding {
            severity: Severity::Warning,
            code: SIMULTANEOUS_DISTALIZATION.into(),
            fdi: None,
            message: format!(
                "{distalizing} molars move more than {} mm simultaneously; anchorage at risk",
                cfg.distalization_norm_mm
            ),
            principle: Some(2),
        });
    }
    out
}

pub fn sub_scores(
    plan: &MovementPlan,
    arch: &ArchState,
    staging: &StagingSummary,
    staging_cfg: &StagingConfig,
    crowding: Option<&CrowdingMetadata>,
    cfg: &ScoringConfig,
) -> SubScores {
    let k = cfg.over_engineer;
    let bio = bio_mean(plan, k);

    let stages = staging.stage_max_displacement.len();
    let stg =
        if stages == 0 { 100.0 } else { 100.0 * staging.stages_within_budget(staging_cfg) as f64 / stages as f64 };

    let n_teeth = arch.present_teeth().count().max(plan.len());
    let n_att = plan.iter().filter(|(fdi, m)| needs_attachment(*fdi, &over_engineer(m, k), cfg)).count();
    let att = if n_teeth == 0 { 100.0 } else { 100.0 * (1.0 - n_att as f64 / n_teeth as f64) };

    let ipr = match crowding {
        Some(c) if c.total_overlap() > 0.0 => {
            let available = cfg.ipr_per_contact_mm * c.contacts.len() as f64;
            100.0 * (available / c.total_overlap()).min(1.0)
        }
        _ => 100.0,
    };

    let norm = |fdi: FdiTooth| plan.get(fdi).map_or(0.0, |m| over_engineer(m, k).translation().norm());
    let mut pairs = Vec::new();
    let mut seen = BTreeSet::new();
    for tooth in arch.present_teeth() {
        let other = tooth.fdi.contralateral();
        if arch.is_present(other) && seen.insert(tooth.fdi.min(other)) {
            pairs.push((tooth.fdi, other));
        }
    }
    let occ = if pairs.is_empty() {
        100.0
    } else {
        let asym: f64 = pairs.iter().map(|(a, b)| ((norm(*a) - norm(*b)).abs() / cfg.occlusion_norm_mm).min(1.0)).sum();
        100.0 * (1.0 - asym / pairs.len() as f64)
    };

    let (mut num, mut den) = (0.0, 0.0);
    for (fdi, raw) in plan.iter() {
        let m = over_engineer(raw, k);
        for (axis, v, limit) in axis_ratios(fdi, &m) {
            let w = v.abs() / limit;
            num += w * cfg.eta.eta(fdi.tooth_type(), axis, v);
            den += w;
        }
    }
    let pred = if den > 0.0 { 100.0 * num / den } else { 100.0 };

    let c = |v: f64| v.clamp(0.0, 100.0);
    SubScores {
        bio: c(bio),
        staging: c(stg),
        attachments: c(att),
        ipr: c(ipr),
        occlusion: c(occ),
        predictability: c(pred),
    }
}

pub fn penalty_factor(n_critical: usize, n_warning: usize) -> f64 {
    CRITICAL_FACTOR.powi(n_critical as i32) * WARNING_FACTOR.powi(n_warning as i32)
}

pub fn composite(sub: SubScores, findings: Vec<Finding>, v1_score: f64) -> TreatmentScore {
    let raw = sub.weighted_sum().clamp(0.0, 100.0);
    let n_crit = findings.iter().filter(|f| f.severity == Severity::Critical).count();
    let n_warn = findings.iter().filter(|f| f.severity == Severity::Warning).count();
    let q = raw * penalty_factor(n_crit, n_warn);
    TreatmentScore {
        sub_scores: sub,
        composite_raw: raw,
        composite: q,
        grade: Grade::from_score(q),
        findings,
        v1_score,
    }
}

/// Scoring plus the staging settings it depends on.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScoringEngine {
    pub scoring: ScoringConfig,
    pub staging: StagingConfig,
}

impl ScoringEngine {
    pub fn new(scoring: ScoringConfig, staging: StagingConfig) -> Result<Self> {
        check_weights()?;
        scoring.validate()?;
        staging.validate()?;
        Ok(Self { scoring, staging })
    }

    pub fn score(
        &self,
        plan: &MovementPlan,
        arch: &ArchState,
        crowding: Option<&CrowdingMetadata>,
    ) -> Result<TreatmentScore> {
        let notes = validate_plan(plan, arch);
        if !notes.is_empty() {
            let msg = notes.iter().map(|n| n.message.as_str()).collect::<Vec<_>>().join("; ");
            return Err(Error::Validation(msg));
        }
        let findings = evaluate_principles(plan, &self.scoring);
        let summary = staging_summary_only(plan, &self.staging);
        let sub = sub_scores(plan, arch, &summary, &self.staging, crowding, &self.scoring);
        Ok(composite(sub, findings, v1_score(plan, &self.scoring)))
    }
}

/// Scores with default configuration.
pub fn score_plan(plan: &MovementPlan, arch: &ArchState) -> Result<TreatmentScore> {
    ScoringEngine::default().score(plan, arch, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dental::{Arch, ToothState};
    use crate::geometry::{UnitQuaternion, Vec3};

    fn fdi(c: u8) -> FdiTooth {
        FdiTooth::new(c).unwrap()
    }

    fn arch_of(codes: &[u8]) -> ArchState {
        ArchState::new(
            Arch::Upper,
            codes.iter().map(|c| ToothState::new(fdi(*c), Vec3::ZERO, UnitQuaternion::IDENTITY, 1.0)),
        )
        .unwrap()
    }

    fn full_upper() -> ArchState {
        arch_of(&[18, 17, 16, 15, 14, 13, 12, 11, 21, 22, 23, 24, 25, 26, 27, 28])
    }

    fn plan(entries: &[(u8, ToothMovement)]) -> MovementPlan {
        MovementPlan::new(entries.iter().map(|(c, m)| (fdi(*c), *m))).unwrap()
    }

    fn tz(v: f64) -> ToothMovement {
        ToothMovement::new(0.0, 0.0, v, 0.0, 0.0, 0.0)
    }

    #[test]
    fn weights_sum_to_one() {
        check_weights().unwrap();
        assert_eq!(WEIGHTS, [0.30, 0.20, 0.15, 0.10, 0.10, 0.15]);
    }

    #[test]
    fn over_engineer_examples() {
        let m = over_engineer(&ToothMovement::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0), 1.3);
        assert_eq!(m.tx, 1.3);
        assert_eq!(over_engineer(&ToothMovement::ZERO, 1.3), ToothMovement::ZERO);
        assert!((over_engineer(&tz(-1.2), 1.3).tz + 1.56).abs() < 1e-12);
    }

    #[test]
    fn v1_examples() {
        let cfg = ScoringConfig::default();
        assert_eq!(v1_score(&MovementPlan::zero([fdi(11)]).unwrap(), &cfg), 100.0);
        let one = plan(&[(11, ToothMovement::new(4.0 / 1.3, 0.0, 0.0, 0.0, 0.0, 0.0))]);
        assert!((v1_score(&one, &cfg) - 100.0 * 5.0 / 6.0).abs() < 1e-9);
        let huge = plan(&[(11, ToothMovement::new(9.0, 9.0, 9.0, 90.0, 90.0, 90.0))]);
        assert_eq!(v1_score(&huge, &cfg), 0.0);
    }

    #[test]
    fn extrusion_findings() {
        let f = evaluate_principles(&plan(&[(11, tz(-1.2))]), &ScoringConfig::default());
        let crit = f.iter().filter(|f| f.severity == Severity::Critical).count();
        let warn = f.iter().filter(|f| f.severity == Severity::Warning).count();
        assert_eq!((crit, warn), (1, 1));
        assert_eq!(f[0].code, EXTRUSION_OVER_LIMIT);
    }

    #[test]
    fn molar_distalization_warning() {
        let m = ToothMovement::new(1.6, 0.0, 0.0, 0.0, 0.0, 0.0);
        let f = evaluate_principles(&plan(&[(16, m), (17, m), (26, m)]), &ScoringConfig::default());
        assert_eq!(f.iter().filter(|f| f.code == SIMULTANEOUS_DISTALIZATION).count(), 1);
        let f = evaluate_principles(&plan(&[(16, m), (17, m)]), &ScoringConfig::default());
        assert!(f.iter().all(|f| f.code != SIMULTANEOUS_DISTALIZATION));
    }

    #[test]
    fn zero_plan_is_perfect() {
        let arch = full_upper();
        let s = score_plan(&MovementPlan::zero(arch.teeth().map(|t| t.fdi)).unwrap(), &arch).unwrap();
        assert_eq!(s.sub_scores, SubScores::PERFECT);
        assert_eq!(s.composite, 100.0);
        assert_eq!(s.grade, Grade::A);
        assert!(s.findings.is_empty());
    }

    #[test]
    fn staging_subscore_two_tooth_example() {
        let arch = arch_of(&[11, 12]);
        let p = plan(&[(11, ToothMovement::new(5.0, 0.0, 0.0, 0.0, 0.0, 0.0)), (12, tz(-3.0))]);
        let s = score_plan(&p, &arch).unwrap();
        assert!((s.sub_scores.staging - 60.0).abs() < 1e-9);
    }

    #[test]
    fn over_limit_torque_lowers_bio() {
        let arch = full_upper();
        let s = score_plan(&plan(&[(11, ToothMovement::new(0.0, 0.0, 0.0, 20.0, 0.0, 0.0))]), &arch).unwrap();
        assert!(s.sub_scores.bio < 100.0);
        assert_eq!(s.findings.iter().filter(|f| f.code == AXIS_OVER_LIMIT).count(), 1);
    }

    #[test]
    fn penalty_example() {
        let f = |sev| Finding {
            severity: sev,
            code: AXIS_OVER_LIMIT.into(),
            fdi: None,
            message: String::new(),
            principle: None,
        };
        let s = composite(
            SubScores::PERFECT,
            vec![f(Severity::Critical), f(Severity::Warning), f(Severity::Warning)],
            100.0,
        );
        assert!((s.composite - 79.9765).abs() < 1e-9);
        assert_eq!(s.grade, Grade::B);
        let s = composite(SubScores::uniform(80.0), vec![], 100.0);
        assert!((s.composite - 80.0).abs() < 1e-12);
        assert_eq!(s.grade, Grade::B);
    }

    #[test]
    fn grade_bands() {
        assert_eq!(Grade::from_score(92.8), Grade::A);
        assert_eq!(Grade::from_score(90.0), Grade::A);
        assert_eq!(Grade::from_score(89.999), Grade::B);
        assert_eq!(Grade::from_score(75.0), Grade::B);
        assert_eq!(Grade::from_score(60.0), Grade::C);
        assert_eq!(Grade::from_score(40.0), Grade::D);
        assert_eq!(Grade::from_score(39.999), Grade::F);
    }

    #[test]
    fn ipr_and_occlusion() {
        let arch = arch_of(&[11, 21, 12, 22]);
        let p = plan(&[(11, ToothMovement::new(2.0 / 1.3, 0.0, 0.0, 0.0, 0.0, 0.0))]);
        let crowding = CrowdingMetadata {
            contacts: vec![
                ContactOverlap { mesial: fdi(11), distal: fdi(12), overlap_mm: 2.0 },
                ContactOverlap { mesial: fdi(21), distal: fdi(22), overlap_mm: 2.0 },
            ],
        };
        let s = ScoringEngine::default().score(&p, &arch, Some(&crowding)).unwrap();
        assert!((s.sub_scores.ipr - 25.0).abs() < 1e-9);
        // pair (11, 21) fully asymmetric, pair (12, 22) symmetric
        assert!((s.sub_scores.occlusion - 50.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_plan_is_rejected() {
        let err = score_plan(&plan(&[(11, tz(1.0))]), &arch_of(&[12])).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }
}
