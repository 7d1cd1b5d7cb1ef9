//! Synthetic crowding scenarios.
//!
//! Teeth are placed by arc length along `y = D (1 - (x / W)^2)` using
//! typical mesiodistal crown widths. Crowding compresses the arc: each
//! contact overlap pulls the teeth on its distal side toward the midline,
//! and the tooth is also pushed buccally or lingually and rotated. The
//! target plan is whatever returns every tooth to its ideal pose.
//!
//! Each tooth is an ellipsoidal point cluster. The centre, the two
//! mesiodistal extremes and the two buccolingual extremes are cloud points
//! and double as ground-truth landmarks; the rest are antipodal pairs, so
//! the cluster mean is the centroid.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dental::{
    Arch, ArchState, FdiTooth, LandmarkGroup, MovementPlan, PointCloud, ToothMovement, ToothState, TEETH_PER_ARCH,
};
use crate::error::{Error, Result};
use crate::geometry::{euler_to_quaternion, UnitQuaternion, Vec3};
use crate::scoring::{ContactOverlap, CrowdingMetadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Square,
    Ovoid,
    Tapered,
    NarrowV,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [Archetype::Square, Archetype::Ovoid, Archetype::Tapered, Archetype::NarrowV];

    /// Half-width and depth of the arch parabola, in mm.
    pub fn parabola(self) -> (f64, f64) {
        match self {
            Archetype::Square => (30.0, 22.0),
            Archetype::Ovoid => (27.0, 27.0),
            Archetype::Tapered => (24.0, 32.0),
            Archetype::NarrowV => (20.0, 36.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Archetype::Square => "square",
            Archetype::Ovoid => "ovoid",
            Archetype::Tapered => "tapered",
            Archetype::NarrowV => "narrow_v",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrowdingSeverity {
    Mild,
    Moderate,
    Severe,
}

impl CrowdingSeverity {
    pub const ALL: [CrowdingSeverity; 3] =
        [CrowdingSeverity::Mild, CrowdingSeverity::Moderate, CrowdingSeverity::Severe];

    /// Total overlap per arch, in mm.
    pub fn band(self) -> (f64, f64) {
        match self {
            CrowdingSeverity::Mild => (0.0, 1.0),
            CrowdingSeverity::Moderate => (1.0, 3.0),
            CrowdingSeverity::Severe => (3.0, 6.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CrowdingSeverity::Mild => "mild",
            CrowdingSeverity::Moderate => "moderate",
            CrowdingSeverity::Severe => "severe",
        }
    }
}

impl fmt::Display for CrowdingSeverity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CrowdingSeverity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CrowdingSeverity::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown severity '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub archetype: Archetype,
    pub severity: CrowdingSeverity,
    pub missing_count: u8,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Scales every displacement and rotation; 0 yields zero plans.
    pub movement_scale: f64,
    /// Added to each tooth's vertical discrepancy so that the plan extrudes
    /// by this much more.
    pub extrusion_bias_mm: f64,
    pub max_rotation_deg: f64,
    pub min_points: usize,
    pub max_points: usize,
    /// Probability that a present tooth gets a low presence probability.
    pub hard_tooth_prob: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            movement_scale: 1.0,
            extrusion_bias_mm: 0.0,
            max_rotation_deg: 25.0,
            min_points: 121,
            max_points: 299,
            hard_tooth_prob: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkTruth {
    pub slot: usize,
    pub group: LandmarkGroup,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCase {
    pub spec: ScenarioSpec,
    pub cloud: PointCloud,
    pub ground_truth: ArchState,
    /// Ideal (post-treatment) centroids of the present teeth.
    pub ideal: BTreeMap<FdiTooth, Vec3>,
    pub target_plan: MovementPlan,
    pub crowding: CrowdingMetadata,
    pub landmarks: Vec<LandmarkTruth>,
    pub presence: [f64; TEETH_PER_ARCH],
}

impl SyntheticCase {
    pub fn landmark_map(&self) -> BTreeMap<(usize, LandmarkGroup), Vec3> {
        self.landmarks.iter().map(|l| ((l.slot, l.group), l.position)).collect()
    }

    pub fn missing(&self) -> Vec<FdiTooth> {
        self.ground_truth.teeth().filter(|t| !t.present).map(|t| t.fdi).collect()
    }
}

/// Typical upper crown widths (mm), central incisor to third molar.
const MD_WIDTHS: [f64; 8] = [8.5, 6.5, 7.5, 7.0, 6.5, 10.0, 9.0, 8.5];

/// Arc-length parametrisation of one side of the arch parabola.
struct ArchCurve {
    half_width: f64,
    depth: f64,
    // (x, arc length) samples for x >= 0
    table: Vec<(f64, f64)>,
}

impl ArchCurve {
    const STEP: f64 = 0.01;

    fn new(archetype: Archetype) -> Self {
        let (w, d) = archetype.parabola();
        let mut table = vec![(0.0, 0.0)];
        let (mut x, mut s) = (0.0f64, 0.0f64);
        while s < 80.0 {
            let nx = x + Self::STEP;
            let dy = Self::y(w, d, nx) - Self::y(w, d, x);
            s += (Self::STEP * Self::STEP + dy * dy).sqrt();
            x = nx;
            table.push((x, s));
        }
        Self { half_width: w, depth: d, table }
    }

    fn y(w: f64, d: f64, x: f64) -> f64 {
        d * (1.0 - (x / w).powi(2))
    }

    /// Point, unit tangent (toward +x) and outward normal at arc length `s`
    /// on the side given by `sign` (-1 for the patient's right).
    fn at(&self, s: f64, sign: f64) -> (Vec3, Vec3, Vec3) {
        let s = s.clamp(0.0, self.table.last().unwrap().1);
        let i = self.table.partition_point(|(_, si)| *si < s).clamp(1, self.table.len() - 1);
        let (x0, s0) = self.table[i - 1];
        let (x1, s1) = self.table[i];
        let x = sign * if s1 > s0 { x0 + (x1 - x0) * (s - s0) / (s1 - s0) } else { x0 };
        let (w, d) = (self.half_width, self.depth);
        let slope = -2.0 * d * x / (w * w);
        let n = (1.0 + slope * slope).sqrt();
        let tangent = Vec3::new(1.0 / n, slope / n, 0.0);
        let normal = Vec3::new(-slope / n, 1.0 / n, 0.0);
        (Vec3::new(x, Self::y(w, d, x), 0.0), tangent, normal)
    }
}

/// Ideal pose and size of one tooth.
#[derive(Debug, Clone, Copy)]
pub(crate) struct IdealTooth {
    pub fdi: FdiTooth,
    pub centroid: Vec3,
    pub orientation: UnitQuaternion,
    /// Ellipsoid semi-axes along (mesiodistal, buccolingual, vertical).
    pub semi_axes: [f64; 3],
    arc: f64,
    side: f64,
}

fn position_index(fdi: FdiTooth) -> usize {
    fdi.position() as usize - 1
}

pub(crate) fn ideal_arch(archetype: Archetype) -> Result<Vec<IdealTooth>> {
    let curve = ArchCurve::new(archetype);
    let mut out = Vec::with_capacity(TEETH_PER_ARCH);
    for slot in 1..=TEETH_PER_ARCH {
        let fdi = FdiTooth::from_slot(Arch::Upper, slot)?;
        let side = if fdi.is_right() { -1.0 } else { 1.0 };
        let p = position_index(fdi);
        let arc = MD_WIDTHS[..p].iter().sum::<f64>() + MD_WIDTHS[p] / 2.0;
        let (c, u, v) = curve.at(arc, side);
        let a = 0.45 * MD_WIDTHS[p];
        out.push(IdealTooth {
            fdi,
            centroid: c,
            orientation: UnitQuaternion::from_frame(u, v, u.cross(v)),
            semi_axes: [a, 0.7 * a, 0.45 * a],
            arc,
            side,
        });
    }
    Ok(out)
}

fn pick_missing(rng: &mut ChaCha8Rng, count: u8) -> Result<Vec<FdiTooth>> {
    let central = [FdiTooth::new(11)?, FdiTooth::new(21)?];
    loop {
        let mut slots: Vec<usize> = Vec::new();
        while slots.len() < count as usize {
            let s = rng.random_range(1..=TEETH_PER_ARCH);
            if !slots.contains(&s) {
                slots.push(s);
            }
        }
        let teeth: Vec<FdiTooth> = slots.iter().map(|s| FdiTooth::from_slot(Arch::Upper, *s)).collect::<Result<_>>()?;
        if !central.iter().all(|c| teeth.contains(c)) {
            return Ok(teeth);
        }
    }
}

/// Builds the scanned state for given plan, so that applying `plan` to the
/// scan lands every tooth on its ideal pose.
pub(crate) struct Materialized {
    pub cloud: PointCloud,
    pub ground_truth: ArchState,
    pub landmarks: Vec<LandmarkTruth>,
}

pub(crate) fn materialize(
    ideal: &[IdealTooth],
    missing: &[FdiTooth],
    plan: &MovementPlan,
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Materialized> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut landmarks = Vec::new();
    let mut gt = ArchState::empty(Arch::Upper);
    for tooth in ideal {
        if missing.contains(&tooth.fdi) {
            gt.insert(ToothState::absent(tooth.fdi, tooth.centroid, 0.0))?;
            continue;
        }
        let m = plan.get(tooth.fdi).copied().unwrap_or(ToothMovement::ZERO);
        let c = tooth.centroid - m.translation();
        let q = tooth.orientation.compose(&euler_to_quaternion(m.rotation())?.conjugate());
        let [a, b, h] = tooth.semi_axes;
        let (u, v, k) = (q.rotate(Vec3::X), q.rotate(Vec3::Y), q.rotate(Vec3::Z));

        let slot = tooth.fdi.slot();
        let marks = [
            (LandmarkGroup::Occlusal, c),
            (LandmarkGroup::Mesial, c - u * (a * tooth.side)),
            (LandmarkGroup::Distal, c + u * (a * tooth.side)),
            (LandmarkGroup::Buccal, c + v * b),
            (LandmarkGroup::Lingual, c - v * b),
        ];
        for (group, position) in marks {
            points.push(position);
            labels.push(tooth.fdi);
            landmarks.push(LandmarkTruth { slot, group, position });
        }
        let mut n = rng.random_range(cfg.min_points..=cfg.max_points);
        if n % 2 == 0 {
            n -= 1;
        }
        for _ in 0..(n - 5) / 2 {
            // rejection-sample the unit ball
            let d = loop {
                let d =
                    Vec3::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
                if d.norm() <= 1.0 {
                    break d;
                }
            };
            let off = u * (a * d.x) + v * (b * d.y) + k * (h * d.z);
            points.push(c + off);
            points.push(c - off);
            labels.push(tooth.fdi);
            labels.push(tooth.fdi);
        }
        let mut state = ToothState::new(tooth.fdi, c, q, 1.0);
        state.extents = [a, b, h];
        gt.insert(state)?;
    }
    landmarks.sort_by_key(|l| (l.slot, l.group.index()));
    Ok(Materialized { cloud: PointCloud::labeled(points, labels)?, ground_truth: gt, landmarks })
}

fn presence_for(rng: &mut ChaCha8Rng, ideal: &[IdealTooth], missing: &[FdiTooth], cfg: &GeneratorConfig) -> [f64; 16] {
    let mut p = [0.0; TEETH_PER_ARCH];
    for tooth in ideal {
        let slot = tooth.fdi.slot();
        p[slot - 1] = if missing.contains(&tooth.fdi) {
            rng.random_range(0.0..0.1)
        } else if rng.random::<f64>() < cfg.hard_tooth_prob {
            rng.random_range(0.3..0.8)
        } else {
            rng.random_range(0.8..=1.0)
        };
    }
    p
}

pub fn generate_scenario(spec: &ScenarioSpec, cfg: &GeneratorConfig) -> Result<SyntheticCase> {
    if spec.missing_count > 2 {
        return Err(Error::invalid("missing_count must be 0, 1 or 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ideal = ideal_arch(spec.archetype)?;
    let curve = ArchCurve::new(spec.archetype);
    let missing = pick_missing(&mut rng, spec.missing_count)?;
    let present: Vec<&IdealTooth> = ideal.iter().filter(|t| !missing.contains(&t.fdi)).collect();

    // contacts between neighbouring present teeth, in slot order
    let (lo, hi) = spec.severity.band();
    let total = cfg.movement_scale * rng.random_range(lo..hi).max(lo + 0.01 * (hi - lo));
    let weights: Vec<f64> = present
        .windows(2)
        .map(|w| {
            // anterior contacts take more of the crowding
            let anterior = w.iter().map(|t| t.fdi.position()).min().unwrap() <= 3;
            rng.random_range(0.2..1.0) * if anterior { 2.0 } else { 1.0 }
        })
        .collect();
    let wsum: f64 = weights.iter().sum();
    let contacts: Vec<ContactOverlap> = present
        .windows(2)
        .zip(&weights)
        .map(|(w, wt)| {
            let (m, d) = if w[0].arc <= w[1].arc { (w[0], w[1]) } else { (w[1], w[0]) };
            ContactOverlap { mesial: m.fdi, distal: d.fdi, overlap_mm: total * wt / wsum }
        })
        .collect();

    // each overlap pulls the teeth beyond it toward the midline
    let mut arc_shift: BTreeMap<FdiTooth, f64> = present.iter().map(|t| (t.fdi, 0.0)).collect();
    for c in &contacts {
        let (m, d) = (arc_shift_key(&ideal, c.mesial), arc_shift_key(&ideal, c.distal));
        let midline = m.side != d.side;
        for t in &present {
            let beyond = if midline {
                0.5
            } else if t.side == m.side && t.arc > m.arc.min(d.arc) {
                1.0
            } else {
                0.0
            };
            *arc_shift.get_mut(&t.fdi).unwrap() += beyond * c.overlap_mm;
        }
    }
    let local_overlap = |fdi: FdiTooth| -> f64 {
        contacts.iter().filter(|c| c.mesial == fdi || c.distal == fdi).map(|c| c.overlap_mm).sum()
    };

    let k = cfg.movement_scale;
    let mut entries = Vec::new();
    for t in &present {
        let overlap = local_overlap(t.fdi);
        let (p, _, normal) = curve.at(t.arc - arc_shift[&t.fdi], t.side);
        let bl = k * rng.random_range(-1.0..=1.0) * (0.3 + 0.5 * overlap);
        let dz = k * rng.random_range(-0.6..=0.6) + cfg.extrusion_bias_mm;
        let scan = p + normal * bl + Vec3::new(0.0, 0.0, dz);
        let tr = t.centroid - scan;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let rz = k * sign * (cfg.max_rotation_deg).min(rng.random_range(2.0..6.0) * (0.5 + overlap));
        let rx = k * rng.random_range(-3.0..=3.0);
        let ry = k * rng.random_range(-3.0..=3.0);
        entries.push((t.fdi, ToothMovement::new(tr.x, tr.y, tr.z, rx, ry, rz)));
    }
    let plan = MovementPlan::new(entries)?;
    let presence = presence_for(&mut rng, &ideal, &missing, cfg);
    let mat = materialize(&ideal, &missing, &plan, cfg, &mut rng)?;
    Ok(SyntheticCase {
        spec: *spec,
        cloud: mat.cloud,
        ground_truth: mat.ground_truth,
        ideal: present.iter().map(|t| (t.fdi, t.centroid)).collect(),
        target_plan: plan,
        crowding: CrowdingMetadata { contacts },
        landmarks: mat.landmarks,
        presence,
    })
}

fn arc_shift_key(ideal: &[IdealTooth], fdi: FdiTooth) -> &IdealTooth {
    ideal.iter().find(|t| t.fdi == fdi).expect("contact teeth come from the ideal arch")
}

/// Same-seed helper used by presets: a case built from an explicit plan.
pub(crate) fn case_from_plan(
    spec: ScenarioSpec,
    missing: &[FdiTooth],
    plan: MovementPlan,
    crowding: CrowdingMetadata,
    cfg: &GeneratorConfig,
) -> Result<SyntheticCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ideal = ideal_arch(spec.archetype)?;
    let presence = presence_for(&mut rng, &ideal, missing, &GeneratorConfig { hard_tooth_prob: 0.0, ..*cfg });
    let mat = materialize(&ideal, missing, &plan, cfg, &mut rng)?;
    Ok(SyntheticCase {
        spec,
        cloud: mat.cloud,
        ground_truth: mat.ground_truth,
        ideal: ideal.iter().filter(|t| !missing.contains(&t.fdi)).map(|t| (t.fdi, t.centroid)).collect(),
        target_plan: plan,
        crowding,
        landmarks: mat.landmarks,
        presence,
    })
}
