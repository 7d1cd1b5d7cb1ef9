//! Dental vocabulary: FDI identities, tooth types, movement limits, scans,
//! tooth states and movement plans.
//!
//! Movement sign convention: `tz > 0` is intrusion, `tz < 0` is extrusion.
//! Translations are expressed in the arch frame (z vertical); rotations are
//! intrinsic XYZ Euler angles in the tooth's local frame.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EulerAnglesDeg, UnitQuaternion, Vec3};

pub const SCHEMA_VERSION: u32 = 1;

/// Number of tooth slots in one arch.
pub const TEETH_PER_ARCH: usize = 16;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Two-digit FDI tooth code (permanent dentition).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct FdiTooth(u8);

impl FdiTooth {
    pub fn new(code: u8) -> Result<Self> {
        let (q, p) = (code / 10, code % 10);
        if (1..=4).contains(&q) && (1..=8).contains(&p) {
            Ok(Self(code))
        } else {
            Err(Error::invalid(format!("{code} is not a permanent FDI tooth code")))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn quadrant(self) -> u8 {
        self.0 / 10
    }

    /// Position from the midline, 1 (central incisor) to 8 (third molar).
    pub fn position(self) -> u8 {
        self.0 % 10
    }

    pub fn arch(self) -> Arch {
        match self.quadrant() {
            1 | 2 => Arch::Upper,
            _ => Arch::Lower,
        }
    }

    /// Patient's right side (quadrants 1 and 4).
    pub fn is_right(self) -> bool {
        matches!(self.quadrant(), 1 | 4)
    }

    pub fn tooth_type(self) -> ToothType {
        match self.position() {
            1 | 2 => ToothType::Incisor,
            3 => ToothType::Canine,
            4 | 5 => ToothType::Premolar,
            _ => ToothType::Molar,
        }
    }

    /// Slot 1..=16 along the arch, from the patient's right third molar to the
    /// left third molar.
    pub fn slot(self) -> usize {
        let p = self.position() as usize;
        if self.is_right() {
            9 - p
        } else {
            8 + p
        }
    }

    pub fn from_slot(arch: Arch, slot: usize) -> Result<Self> {
        if !(1..=TEETH_PER_ARCH).contains(&slot) {
            return Err(Error::invalid(format!("tooth slot {slot} outside 1..=16")));
        }
        let (right_q, left_q) = match arch {
            Arch::Upper => (1, 2),
            Arch::Lower => (4, 3),
        };
        let code = if slot <= 8 { right_q * 10 + (9 - slot) } else { left_q * 10 + (slot - 8) };
        FdiTooth::new(code as u8)
    }

    /// Same position on the opposite side of the arch.
    pub fn contralateral(self) -> FdiTooth {
        let q = match self.quadrant() {
            1 => 2,
            2 => 1,
            3 => 4,
            _ => 3,
        };
        FdiTooth(q * 10 + self.position())
    }

    /// All 32 permanent codes in ascending order.
    pub fn all() -> impl Iterator<Item = FdiTooth> {
        (1..=4u8).flat_map(|q| (1..=8u8).map(move |p| FdiTooth(q * 10 + p)))
    }
}

impl TryFrom<u8> for FdiTooth {
    type Error = Error;
    fn try_from(code: u8) -> Result<Self> {
        FdiTooth::new(code)
    }
}

impl From<FdiTooth> for u8 {
    fn from(t: FdiTooth) -> u8 {
        t.0
    }
}

impl fmt::Display for FdiTooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToothType {
    Incisor,
    Canine,
    Premolar,
    Molar,
}

pub fn tooth_type(fdi: FdiTooth) -> ToothType {
    fdi.tooth_type()
}

/// Per-tooth-type movement limits (mm and degrees) with the vertical
/// predictability fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementLimits {
    pub tx_md_mm: f64,
    pub ty_bl_mm: f64,
    pub tz_intrusion_mm: f64,
    pub tz_extrusion_mm: f64,
    pub rx_torque_deg: f64,
    pub ry_tip_deg: f64,
    pub rz_rotation_deg: f64,
    pub eta_intrusion: f64,
    pub eta_extrusion: f64,
}

const fn limits_row(tx: f64, ty: f64, rx: f64, ry: f64, rz: f64) -> MovementLimits {
    MovementLimits {
        tx_md_mm: tx,
        ty_bl_mm: ty,
        tz_intrusion_mm: 2.0,
        tz_extrusion_mm: 1.5,
        rx_torque_deg: rx,
        ry_tip_deg: ry,
        rz_rotation_deg: rz,
        eta_intrusion: 0.69,
        eta_extrusion: 0.42,
    }
}

pub const INCISOR_LIMITS: MovementLimits = limits_row(4.0, 2.5, 15.0, 10.0, 45.0);
pub const CANINE_LIMITS: MovementLimits = limits_row(3.5, 2.5, 12.0, 10.0, 40.0);
pub const PREMOLAR_LIMITS: MovementLimits = limits_row(3.5, 3.0, 10.0, 10.0, 35.0);
pub const MOLAR_LIMITS: MovementLimits = limits_row(2.0, 2.5, 8.0, 8.0, 20.0);

pub fn limits_for(t: ToothType) -> MovementLimits {
    match t {
        ToothType::Incisor => INCISOR_LIMITS,
        ToothType::Canine => CANINE_LIMITS,
        ToothType::Premolar => PREMOLAR_LIMITS,
        ToothType::Molar => MOLAR_LIMITS,
    }
}

/// Predictability (fraction of planned movement achieved) per movement
/// class. Only the intrusion and extrusion values are published; the rest
/// are configurable defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EtaTable {
    pub translation_md: f64,
    pub translation_bl: f64,
    pub intrusion: f64,
    pub extrusion: f64,
    pub torque: f64,
    pub tip: f64,
    pub rotation: f64,
    /// Rotation of rounded crowns (canines, premolars).
    pub rotation_rounded: f64,
}

impl Default for EtaTable {
    fn default() -> Self {
        Self {
            translation_md: 0.85,
            translation_bl: 0.85,
            intrusion: 0.69,
            extrusion: 0.42,
            torque: 0.50,
            tip: 0.75,
            rotation: 0.55,
            rotation_rounded: 0.45,
        }
    }
}

impl EtaTable {
    pub fn eta(&self, t: ToothType, axis: MovementAxis, value: f64) -> f64 {
        match axis {
            MovementAxis::Tx => self.translation_md,
            MovementAxis::Ty => self.translation_bl,
            MovementAxis::Tz if value < 0.0 => self.extrusion,
            MovementAxis::Tz => self.intrusion,
            MovementAxis::Rx => self.torque,
            MovementAxis::Ry => self.tip,
            MovementAxis::Rz => match t {
                ToothType::Canine | ToothType::Premolar => self.rotation_rounded,
                _ => self.rotation,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.translation_md,
            self.translation_bl,
            self.intrusion,
            self.extrusion,
            self.torque,
            self.tip,
            self.rotation,
            self.rotation_rounded,
        ];
        if all.iter().all(|e| *e > 0.0 && *e <= 1.0) {
            Ok(())
        } else {
            Err(Error::Config("predictability values must lie in (0, 1]".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MovementAxis {
    Tx,
    Ty,
    Tz,
    Rx,
    Ry,
    Rz,
}

impl MovementAxis {
    pub const ALL: [MovementAxis; 6] =
        [MovementAxis::Tx, MovementAxis::Ty, MovementAxis::Tz, MovementAxis::Rx, MovementAxis::Ry, MovementAxis::Rz];

    pub fn value(self, m: &ToothMovement) -> f64 {
        match self {
            MovementAxis::Tx => m.tx,
            MovementAxis::Ty => m.ty,
            MovementAxis::Tz => m.tz,
            MovementAxis::Rx => m.rx,
            MovementAxis::Ry => m.ry,
            MovementAxis::Rz => m.rz,
        }
    }

    /// Limit for this axis; the vertical limit depends on the movement sign.
    pub fn limit(self, l: &MovementLimits, value: f64) -> f64 {
        match self {
            MovementAxis::Tx => l.tx_md_mm,
            MovementAxis::Ty => l.ty_bl_mm,
            MovementAxis::Tz if value < 0.0 => l.tz_extrusion_mm,
            MovementAxis::Tz => l.tz_intrusion_mm,
            MovementAxis::Rx => l.rx_torque_deg,
            MovementAxis::Ry => l.ry_tip_deg,
            MovementAxis::Rz => l.rz_rotation_deg,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MovementAxis::Tx => "tx",
            MovementAxis::Ty => "ty",
            MovementAxis::Tz => "tz",
            MovementAxis::Rx => "rx",
            MovementAxis::Ry => "ry",
            MovementAxis::Rz => "rz",
        }
    }
}

/// 6-DoF movement of one tooth: translations in mm, rotations in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ToothMovement {
    #[serde(rename = "tx_mm", default)]
    pub tx: f64,
    #[serde(rename = "ty_mm", default)]
    pub ty: f64,
    #[serde(rename = "tz_mm", default)]
    pub tz: f64,
    #[serde(rename = "rx_deg", default)]
    pub rx: f64,
    #[serde(rename = "ry_deg", default)]
    pub ry: f64,
    #[serde(rename = "rz_deg", default)]
    pub rz: f64,
}

impl ToothMovement {
    pub const ZERO: ToothMovement = ToothMovement { tx: 0.0, ty: 0.0, tz: 0.0, rx: 0.0, ry: 0.0, rz: 0.0 };

    pub fn new(tx: f64, ty: f64, tz: f64, rx: f64, ry: f64, rz: f64) -> Self {
        Self { tx, ty, tz, rx, ry, rz }
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.tx, self.ty, self.tz)
    }

    pub fn rotation(&self) -> EulerAnglesDeg {
        EulerAnglesDeg::new(self.rx, self.ry, self.rz)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.tx * k, self.ty * k, self.tz * k, self.rx * k, self.ry * k, self.rz * k)
    }

    pub fn is_finite(&self) -> bool {
        MovementAxis::ALL.iter().all(|a| a.value(self).is_finite())
    }

    pub fn is_extrusion(&self) -> bool {
        self.tz < 0.0
    }
}

#[derive(Serialize, Deserialize)]
struct MovementEntry {
    fdi: FdiTooth,
    #[serde(flatten)]
    movement: ToothMovement,
}

#[derive(Serialize, Deserialize)]
struct PlanDoc {
    #[serde(default = "schema_version")]
    schema_version: u32,
    movements: Vec<MovementEntry>,
}

/// Target movement per tooth. Holds at least one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanDoc", into = "PlanDoc")]
pub struct MovementPlan {
    entries: BTreeMap<FdiTooth, ToothMovement>,
}

impl TryFrom<PlanDoc> for MovementPlan {
    type Error = Error;
    fn try_from(doc: PlanDoc) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!("unsupported plan schema_version {}", doc.schema_version)));
        }
        MovementPlan::new(doc.movements.into_iter().map(|e| (e.fdi, e.movement)))
    }
}

impl From<MovementPlan> for PlanDoc {
    fn from(p: MovementPlan) -> Self {
        PlanDoc {
            schema_version: SCHEMA_VERSION,
            movements: p.entries.into_iter().map(|(fdi, movement)| MovementEntry { fdi, movement }).collect(),
        }
    }
}

impl MovementPlan {
    /// Rejects empty plans and duplicate teeth. Non-finite values are
    /// accepted here and reported by [`validate_plan`].
    pub fn new(entries: impl IntoIterator<Item = (FdiTooth, ToothMovement)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (fdi, m) in entries {
            if map.insert(fdi, m).is_some() {
                return Err(Error::invalid(format!("duplicate movement for tooth {fdi}")));
            }
        }
        if map.is_empty() {
            return Err(Error::invalid("movement plan must contain at least one tooth"));
        }
        Ok(Self { entries: map })
    }

    /// Zero movement for every given tooth.
    pub fn zero(teeth: impl IntoIterator<Item = FdiTooth>) -> Result<Self> {
        Self::new(teeth.into_iter().map(|t| (t, ToothMovement::ZERO)))
    }

    pub fn get(&self, fdi: FdiTooth) -> Option<&ToothMovement> {
        self.entries.get(&fdi)
    }

    pub fn iter(&self) -> impl Iterator<Item = (FdiTooth, &ToothMovement)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn teeth(&self) -> impl Iterator<Item = FdiTooth> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Applies `f` to every movement.
    pub fn map(&self, f: impl Fn(&ToothMovement) -> ToothMovement) -> Self {
        Self { entries: self.entries.iter().map(|(k, v)| (*k, f(v))).collect() }
    }

    pub fn set(&mut self, fdi: FdiTooth, m: ToothMovement) {
        self.entries.insert(fdi, m);
    }
}

#[derive(Deserialize)]
struct CloudDoc {
    points: Vec<Vec3>,
    #[serde(default)]
    labels: Option<Vec<FdiTooth>>,
}

impl TryFrom<CloudDoc> for PointCloud {
    type Error = Error;
    fn try_from(doc: CloudDoc) -> Result<Self> {
        PointCloud::build(doc.points, doc.labels)
    }
}

/// Raw scan: points plus optional per-point tooth labels (synthetic data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CloudDoc")]
pub struct PointCloud {
    points: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<FdiTooth>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        Self::build(points, None)
    }

    pub fn labeled(points: Vec<Vec3>, labels: Vec<FdiTooth>) -> Result<Self> {
        Self::build(points, Some(labels))
    }

    fn build(points: Vec<Vec3>, labels: Option<Vec<FdiTooth>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud must contain at least one point"));
        }
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(Error::invalid(format!("{} labels for {} points", l.len(), points.len())));
            }
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("point cloud contains non-finite coordinates"));
        }
        Ok(Self { points, labels })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[FdiTooth]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn without_labels(&self) -> Self {
        Self { points: self.points.clone(), labels: None }
    }

    pub fn centroid(&self) -> Vec3 {
        Vec3::mean(&self.points).expect("point cloud is never empty")
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        (lo, hi)
    }
}

/// The five landmark groups per tooth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkGroup {
    Mesial,
    Distal,
    Buccal,
    Lingual,
    Occlusal,
}

impl LandmarkGroup {
    pub const ALL: [LandmarkGroup; 5] = [
        LandmarkGroup::Mesial,
        LandmarkGroup::Distal,
        LandmarkGroup::Buccal,
        LandmarkGroup::Lingual,
        LandmarkGroup::Occlusal,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub group: LandmarkGroup,
    pub position: Vec3,
}

/// Geometric estimate for one tooth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToothState {
    pub fdi: FdiTooth,
    pub centroid: Vec3,
    #[serde(rename = "orientation_wxyz")]
    pub orientation: UnitQuaternion,
    #[serde(default)]
    pub landmarks: Vec<Landmark>,
    pub confidence: f64,
    pub present: bool,
    /// PCA half-extents along the tooth axes (mm), used for rendering.
    #[serde(default)]
    pub extents: [f64; 3],
    /// Set when an estimator that should have refined this tooth failed.
    #[serde(default)]
    pub degraded: bool,
}

impl ToothState {
    pub fn new(fdi: FdiTooth, centroid: Vec3, orientation: UnitQuaternion, confidence: f64) -> Self {
        Self {
            fdi,
            centroid,
            orientation,
            landmarks: Vec::new(),
            confidence: confidence.clamp(0.0, 1.0),
            present: true,
            extents: [0.0; 3],
            degraded: false,
        }
    }

    /// A missing tooth; `confidence` carries the presence probability.
    pub fn absent(fdi: FdiTooth, placeholder: Vec3, confidence: f64) -> Self {
        Self { present: false, ..Self::new(fdi, placeholder, UnitQuaternion::IDENTITY, confidence) }
    }
}

#[derive(Serialize, Deserialize)]
struct ArchDoc {
    #[serde(default = "schema_version")]
    schema_version: u32,
    arch: Arch,
    teeth: Vec<ToothState>,
}

/// All tooth states of one arch, keyed by FDI code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArchDoc", into = "ArchDoc")]
pub struct ArchState {
    arch: Arch,
    teeth: BTreeMap<FdiTooth, ToothState>,
}

impl TryFrom<ArchDoc> for ArchState {
    type Error = Error;
    fn try_from(doc: ArchDoc) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!("unsupported arch schema_version {}", doc.schema_version)));
        }
        ArchState::new(doc.arch, doc.teeth)
    }
}

impl From<ArchState> for ArchDoc {
    fn from(a: ArchState) -> Self {
        ArchDoc { schema_version: SCHEMA_VERSION, arch: a.arch, teeth: a.teeth.into_values().collect() }
    }
}

impl ArchState {
    pub fn new(arch: Arch, teeth: impl IntoIterator<Item = ToothState>) -> Result<Self> {
        let mut s = Self::empty(arch);
        for t in teeth {
            s.insert(t)?;
        }
        Ok(s)
    }

    pub fn empty(arch: Arch) -> Self {
        Self { arch, teeth: BTreeMap::new() }
    }

    pub fn insert(&mut self, t: ToothState) -> Result<()> {
        if t.fdi.arch() != self.arch {
            return Err(Error::invalid(format!("tooth {} does not belong to the {:?} arch", t.fdi, self.arch)));
        }
        if !(0.0..=1.0).contains(&t.confidence) {
            return Err(Error::invalid(format!("tooth {} confidence {} outside [0, 1]", t.fdi, t.confidence)));
        }
        if !t.present && !t.landmarks.is_empty() {
            return Err(Error::invalid(format!("absent tooth {} carries landmarks", t.fdi)));
        }
        if self.teeth.insert(t.fdi, t).is_some() {
            return Err(Error::invalid("duplicate tooth in arch state"));
        }
        Ok(())
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn get(&self, fdi: FdiTooth) -> Option<&ToothState> {
        self.teeth.get(&fdi)
    }

    pub fn teeth(&self) -> impl Iterator<Item = &ToothState> {
        self.teeth.values()
    }

    pub fn present_teeth(&self) -> impl Iterator<Item = &ToothState> {
        self.teeth.values().filter(|t| t.present)
    }

    pub fn is_present(&self, fdi: FdiTooth) -> bool {
        self.teeth.get(&fdi).is_some_and(|t| t.present)
    }

    pub fn len(&self) -> usize {
        self.teeth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teeth.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanNoteKind {
    AbsentTooth,
    NonFinite,
    WrongArch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNote {
    pub fdi: FdiTooth,
    pub kind: PlanNoteKind,
    pub message: String,
}

/// Structural consistency of a plan against an arch. Empty means valid.
pub fn validate_plan(plan: &MovementPlan, arch: &ArchState) -> Vec<PlanNote> {
    let mut notes = Vec::new();
    for (fdi, m) in plan.iter() {
        if fdi.arch() != arch.arch() {
            notes.push(PlanNote {
                fdi,
                kind: PlanNoteKind::WrongArch,
                message: format!("tooth {fdi} is not in the {:?} arch", arch.arch()),
            });
        } else if !arch.is_present(fdi) {
            notes.push(PlanNote {
                fdi,
                kind: PlanNoteKind::AbsentTooth,
                message: format!("movement planned for absent tooth {fdi}"),
            });
        }
        if !m.is_finite() {
            notes.push(PlanNote {
                fdi,
                kind: PlanNoteKind::NonFinite,
                message: format!("movement for tooth {fdi} has non-finite components"),
            });
        }
    }
    notes
}
