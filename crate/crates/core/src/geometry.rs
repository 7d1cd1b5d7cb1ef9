//! Small 3D math kernel: vectors, unit quaternions, Euler conversion,
//! spherical interpolation and principal-axis extraction.
//!
//! Conventions used throughout the crate:
//!
//! - Euler angles are intrinsic X-then-Y-then-Z (torque, tip, rotation),
//!   i.e. `R = Rx(rx) * Ry(ry) * Rz(rz)`.
//! - `slerp` follows the shortest arc (the second quaternion is negated when
//!   the dot product is negative).
//! - PCA axes are sign-normalised so that each axis' largest-magnitude
//!   component is positive.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, Rotation3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this geodesic half-angle (radians) slerp degrades to normalised lerp.
pub const SLERP_LINEAR_THRESHOLD: f64 = 1e-8;

/// Covariance eigenvalue (mm^2) below which a point set counts as a single point.
const DEGENERATE_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn distance_squared(self, o: Vec3) -> f64 {
        let d = self - o;
        d.dot(d)
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    /// Arithmetic mean; `None` for an empty slice.
    pub fn mean(points: &[Vec3]) -> Option<Vec3> {
        if points.is_empty() {
            return None;
        }
        let sum = points.iter().fold(Vec3::ZERO, |acc, p| acc + *p);
        Some(sum / points.len() as f64)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Euler angles in degrees: `rx` torque, `ry` tip, `rz` rotation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAnglesDeg {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl EulerAnglesDeg {
    pub const fn new(rx: f64, ry: f64, rz: f64) -> Self {
        Self { rx, ry, rz }
    }

    /// Euclidean norm of the angle triple, in degrees.
    pub fn norm(&self) -> f64 {
        (self.rx * self.rx + self.ry * self.ry + self.rz * self.rz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.rx.is_finite() && self.ry.is_finite() && self.rz.is_finite()
    }
}

/// A rotation stored as a unit quaternion `(w, x, y, z)`.
///
/// Every constructor and every operation returning a quaternion renormalises,
/// so the norm stays within 1e-9 of one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = Error;

    /// Keeps the components as given so that JSON round trips are exact.
    fn try_from(a: [f64; 4]) -> Result<Self> {
        let n = (a.iter().map(|c| c * c).sum::<f64>()).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("quaternion norm {n} is not unit")));
        }
        Ok(Self { w: a[0], x: a[1], y: a[2], z: a[3] })
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.wxyz()
    }
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalises `(w, x, y, z)`; fails on a zero or non-finite input.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::invalid("quaternion must be finite and non-zero"));
        }
        Ok(Self { w: w / n, x: x / n, y: y / n, z: z / n })
    }

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Result<Self> {
        let axis = axis.normalized().ok_or_else(|| Error::invalid("rotation axis must be non-zero"))?;
        if !angle_rad.is_finite() {
            return Err(Error::invalid("rotation angle must be finite"));
        }
        let (s, c) = (angle_rad / 2.0).sin_cos();
        Ok(Self::renormalized(c, axis.x * s, axis.y * s, axis.z * s))
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn wxyz(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, o: &UnitQuaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn conjugate(&self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn negated(&self) -> Self {
        Self { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self * o` (apply `o` first, then `self`).
    pub fn compose(&self, o: &UnitQuaternion) -> Self {
        let (a, b) = (self, o);
        Self::renormalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let m = self.to_matrix();
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Builds a rotation from three orthonormal, right-handed column vectors.
    pub fn from_frame(e1: Vec3, e2: Vec3, e3: Vec3) -> Self {
        let m = Matrix3::new(e1.x, e2.x, e3.x, e1.y, e2.y, e3.y, e1.z, e2.z, e3.z);
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
        let q = q.quaternion();
        Self::renormalized(q.w, q.i, q.j, q.k)
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.w.abs().min(1.0).acos()
    }

    /// Geodesic angle between two rotations, in radians.
    pub fn angle_to(&self, o: &UnitQuaternion) -> f64 {
        2.0 * self.dot(o).abs().min(1.0).acos()
    }

    /// Intrinsic XYZ Euler angles in degrees, inverse of [`euler_to_quaternion`].
    pub fn to_euler_deg(&self) -> EulerAnglesDeg {
        let m = self.to_matrix();
        let ry = m[0][2].clamp(-1.0, 1.0).asin();
        let rx = (-m[1][2]).atan2(m[2][2]);
        let rz = (-m[0][1]).atan2(m[0][0]);
        EulerAnglesDeg::new(rx.to_degrees(), ry.to_degrees(), rz.to_degrees())
    }
}

/// Intrinsic XYZ composition `Rx(rx) * Ry(ry) * Rz(rz)`.
pub fn euler_to_quaternion(e: EulerAnglesDeg) -> Result<UnitQuaternion> {
    if !e.is_finite() {
        return Err(Error::invalid("Euler angles must be finite"));
    }
    let (sx, cx) = (e.rx.to_radians() / 2.0).sin_cos();
    let (sy, cy) = (e.ry.to_radians() / 2.0).sin_cos();
    let (sz, cz) = (e.rz.to_radians() / 2.0).sin_cos();
    let qx = UnitQuaternion { w: cx, x: sx, y: 0.0, z: 0.0 };
    let qy = UnitQuaternion { w: cy, x: 0.0, y: sy, z: 0.0 };
    let qz = UnitQuaternion { w: cz, x: 0.0, y: 0.0, z: sz };
    Ok(qx.compose(&qy).compose(&qz))
}

/// Shortest-arc spherical interpolation; `t = 0` returns `a` and `t = 1`
/// returns `b`, both bit-exactly, as does `a == b` for any `t`.
pub fn slerp(a: &UnitQuaternion, b: &UnitQuaternion, t: f64) -> Result<UnitQuaternion> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("slerp parameter {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(*a);
    }
    if t == 1.0 {
        return Ok(*b);
    }
    if a == b {
        return Ok(*a);
    }
    let mut dot = a.dot(b);
    let mut b = *b;
    if dot < 0.0 {
        b = b.negated();
        dot = -dot;
    }
    let theta = dot.min(1.0).acos();
    let (ka, kb) = if theta < SLERP_LINEAR_THRESHOLD {
        (1.0 - t, t)
    } else {
        let s = theta.sin();
        (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s)
    };
    Ok(UnitQuaternion::renormalized(ka * a.w + kb * b.w, ka * a.x + kb * b.x, ka * a.y + kb * b.y, ka * a.z + kb * b.z))
}

/// Result of [`principal_axes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrincipalAxes {
    pub centroid: Vec3,
    /// Unit axes in descending-variance order.
    pub axes: [Vec3; 3],
    /// Covariance eigenvalues (population), descending.
    pub variances: [f64; 3],
    /// Half-extent of the points along each axis.
    pub extents: [f64; 3],
    /// Set when the spread is too small to fix an orientation; axes are then
    /// the coordinate axes.
    pub degenerate: bool,
}

impl PrincipalAxes {
    /// Right-handed rotation whose columns are `axes[0]`, `axes[1]` and their
    /// cross product. The third column can differ in sign from `axes[2]`.
    pub fn orientation(&self) -> UnitQuaternion {
        if self.degenerate {
            return UnitQuaternion::IDENTITY;
        }
        let [e1, e2, _] = self.axes;
        UnitQuaternion::from_frame(e1, e2, e1.cross(e2))
    }
}

fn sign_normalize(v: Vec3) -> Vec3 {
    let c = v.to_array();
    let mut best = 0;
    for i in 1..3 {
        if c[i].abs() > c[best].abs() {
            best = i;
        }
    }
    if c[best] < 0.0 {
        -v
    } else {
        v
    }
}

/// Centroid, principal axes and extents of a point set.
///
/// A set whose spread is concentrated on fewer than two directions
/// (coincident or collinear points) is flagged degenerate and gets the
/// identity frame.
pub fn principal_axes(points: &[Vec3]) -> Result<PrincipalAxes> {
    let centroid = Vec3::mean(points).ok_or_else(|| Error::invalid("principal_axes on empty point set"))?;
    if !centroid.is_finite() {
        return Err(Error::invalid("point set contains non-finite coordinates"));
    }
    let n = points.len() as f64;
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = *p - centroid;
        let d = nalgebra::Vector3::new(d.x, d.y, d.z);
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let variances = order.map(|i| eig.eigenvalues[i].max(0.0));

    let degenerate = variances[0] <= DEGENERATE_EIGENVALUE || variances[1] <= 1e-9 * variances[0];
    let axes = if degenerate {
        [Vec3::X, Vec3::Y, Vec3::Z]
    } else {
        order.map(|i| {
            let c = eig.eigenvectors.column(i);
            let v = Vec3::new(c[0], c[1], c[2]).normalized().unwrap_or(Vec3::X);
            sign_normalize(v)
        })
    };
    let mut extents = [0.0f64; 3];
    for p in points {
        let d = *p - centroid;
        for (k, axis) in axes.iter().enumerate() {
            extents[k] = extents[k].max(d.dot(*axis).abs());
        }
    }
    Ok(PrincipalAxes { centroid, axes, variances, extents, degenerate })
}
