//! Straightforward re-derivations of the scoring composite and of presence
//! gating, kept free of engine code so they can serve as test oracles.
//! Only the plain data types are shared.
#![allow(dead_code, clippy::needless_range_loop)]

use orthoplan_core::dental::{Arch, ArchState, FdiTooth, MovementPlan, ToothMovement, ToothState};
use orthoplan_core::geometry::{UnitQuaternion, Vec3};
use orthoplan_core::scoring::{ContactOverlap, CrowdingMetadata};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---- scoring -------------------------------------------------------------

const OE: f64 = 1.3;
const DELTA_T: f64 = 0.25;
const DELTA_R: f64 = 2.0;
const MIN_ALIGNERS: f64 = 20.0;
const EXTRUSION_T0: f64 = 0.6;

/// (tx, ty, intrusion, extrusion, rx, ry, rz) by FDI position 1..=8.
fn limits(position: u8) -> [f64; 7] {
    match position {
        1 | 2 => [4.0, 2.5, 2.0, 1.5, 15.0, 10.0, 45.0],
        3 => [3.5, 2.5, 2.0, 1.5, 12.0, 10.0, 40.0],
        4 | 5 => [3.5, 3.0, 2.0, 1.5, 10.0, 10.0, 35.0],
        _ => [2.0, 2.5, 2.0, 1.5, 8.0, 8.0, 20.0],
    }
}

fn is_rounded(position: u8) -> bool {
    (3..=5).contains(&position)
}

fn is_molar(position: u8) -> bool {
    position >= 6
}

fn components(m: &ToothMovement) -> [f64; 6] {
    [m.tx, m.ty, m.tz, m.rx, m.ry, m.rz]
}

fn axis_limit(position: u8, axis: usize, v: f64) -> f64 {
    let l = limits(position);
    match axis {
        0 => l[0],
        1 => l[1],
        2 => {
            if v < 0.0 {
                l[3]
            } else {
                l[2]
            }
        }
        a => l[a + 1],
    }
}

fn eta(position: u8, axis: usize, v: f64) -> f64 {
    match axis {
        0 | 1 => 0.85,
        2 => {
            if v < 0.0 {
                0.42
            } else {
                0.69
            }
        }
        3 => 0.50,
        4 => 0.75,
        _ => {
            if is_rounded(position) {
                0.45
            } else {
                0.55
            }
        }
    }
}

fn progress(tz: f64, t: f64) -> f64 {
    if t >= 1.0 {
        1.0
    } else if tz < 0.0 {
        ((t - EXTRUSION_T0) / (1.0 - EXTRUSION_T0)).max(0.0)
    } else {
        t
    }
}

fn norm3(a: f64, b: f64, c: f64) -> f64 {
    (a * a + b * b + c * c).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct OracleScore {
    /// bio, staging, attachments, ipr, occlusion, predictability
    pub sub: [f64; 6],
    pub raw: f64,
    pub composite: f64,
    pub critical: usize,
    pub warning: usize,
    pub v1: f64,
}

pub fn brute_score(plan: &MovementPlan, arch: &ArchState, crowding: Option<&CrowdingMetadata>) -> OracleScore {
    let moves: Vec<(u8, [f64; 6])> = plan.iter().map(|(f, m)| (f.code(), components(m))).collect();
    let pos = |code: u8| code % 10;
    let oe = |c: [f64; 6]| c.map(|v| v * OE);

    // biomechanics (also the legacy score)
    let mut q_sum = 0.0;
    for (code, c) in &moves {
        let e = oe(*c);
        for axis in 0..6 {
            q_sum += (1.0 - e[axis].abs() / axis_limit(pos(*code), axis, e[axis])).max(0.0);
        }
    }
    let bio = 100.0 * q_sum / (6 * moves.len()) as f64;

    // staging: aligner count from raw magnitudes, then per-aligner checks
    let mut max_t: f64 = 0.0;
    let mut max_r: f64 = 0.0;
    for (_, c) in &moves {
        max_t = max_t.max(norm3(c[0], c[1], c[2]));
        max_r = max_r.max(norm3(c[3], c[4], c[5]));
    }
    let a = (max_t / DELTA_T - 1e-9).ceil().max((max_r / DELTA_R - 1e-9).ceil()).max(MIN_ALIGNERS) as usize;
    let mut good = 0;
    for k in 0..a {
        let t0 = k as f64 / a as f64;
        let t1 = if k + 1 == a { 1.0 } else { (k + 1) as f64 / a as f64 };
        let ok = moves.iter().all(|(_, c)| {
            let dp = progress(c[2], t1) - progress(c[2], t0);
            norm3(c[0], c[1], c[2]) * dp <= DELTA_T + 1e-9 && norm3(c[3], c[4], c[5]) * dp <= DELTA_R + 1e-9
        });
        if ok {
            good += 1;
        }
    }
    let staging = 100.0 * good as f64 / a as f64;

    // attachments
    let present: Vec<u8> = arch.teeth().filter(|t| t.present).map(|t| t.fdi.code()).collect();
    let n_att = moves
        .iter()
        .filter(|(code, c)| {
            let e = oe(*c);
            (is_rounded(pos(*code)) && e[5].abs() > 15.0) || -e[2] > 0.5
        })
        .count();
    let n_teeth = present.len().max(moves.len());
    let attachments = (100.0 * (1.0 - n_att as f64 / n_teeth as f64)).clamp(0.0, 100.0);

    // interproximal reduction
    let ipr = match crowding {
        Some(c) => {
            let required: f64 = c.contacts.iter().map(|x| x.overlap_mm.max(0.0)).sum();
            if required > 0.0 {
                100.0 * (0.5 * c.contacts.len() as f64 / required).min(1.0)
            } else {
                100.0
            }
        }
        None => 100.0,
    };

    // occlusion: left/right pairs among present teeth
    let tnorm = |code: u8| {
        moves.iter().find(|(c, _)| *c == code).map_or(0.0, |(_, c)| {
            let e = oe(*c);
            norm3(e[0], e[1], e[2])
        })
    };
    let mut asym = Vec::new();
    for &code in &present {
        let other = match code / 10 {
            1 => Some(code + 10),
            4 => Some(code - 10),
            _ => None,
        };
        if let Some(other) = other {
            if present.contains(&other) {
                asym.push(((tnorm(code) - tnorm(other)).abs() / 2.0).min(1.0));
            }
        }
    }
    let occlusion = if asym.is_empty() { 100.0 } else { 100.0 * (1.0 - asym.iter().sum::<f64>() / asym.len() as f64) };

    // predictability
    let (mut num, mut den) = (0.0, 0.0);
    for (code, c) in &moves {
        let e = oe(*c);
        for axis in 0..6 {
            let w = e[axis].abs() / axis_limit(pos(*code), axis, e[axis]);
            num += w * eta(pos(*code), axis, e[axis]);
            den += w;
        }
    }
    let predictability = if den > 0.0 { 100.0 * num / den } else { 100.0 };

    // findings
    let mut critical = 0;
    let mut warning = 0;
    let mut molars = 0;
    for (code, c) in &moves {
        let e = oe(*c);
        if e[2] < 0.0 {
            warning += 1;
            if -e[2] > 1.5 {
                critical += 1;
            }
        }
        for axis in 0..6 {
            if axis == 2 && e[2] < 0.0 {
                continue;
            }
            if e[axis].abs() > axis_limit(pos(*code), axis, e[axis]) {
                warning += 1;
            }
        }
        if is_molar(pos(*code)) && norm3(e[0], e[1], e[2]) > 1.5 {
            molars += 1;
        }
    }
    if molars >= 3 {
        warning += 1;
    }

    let sub = [bio, staging, attachments, ipr, occlusion, predictability];
    let w = [0.30, 0.20, 0.15, 0.10, 0.10, 0.15];
    let raw = sub.iter().zip(w).map(|(s, w)| s * w).sum::<f64>().clamp(0.0, 100.0);
    let composite = raw * 0.85f64.powi(critical as i32) * 0.97f64.powi(warning as i32);
    OracleScore { sub, raw, composite, critical, warning, v1: bio }
}

/// A small upper arch (1 to 4 present teeth, sometimes one absent) with a
/// random plan on a subset of its present teeth. Components are zero about
/// a third of the time so the empty-sum branches are exercised.
pub fn random_scoring_case(rng: &mut ChaCha8Rng) -> (ArchState, MovementPlan, Option<CrowdingMetadata>) {
    let all: Vec<u8> = vec![18, 17, 16, 15, 14, 13, 12, 11, 21, 22, 23, 24, 25, 26, 27, 28];
    let n = rng.random_range(1..=4usize);
    let mut codes: Vec<u8> = Vec::new();
    while codes.len() < n {
        let c = all[rng.random_range(0..all.len())];
        if !codes.contains(&c) {
            codes.push(c);
        }
    }
    // pair up contralaterals now and then so occlusion is exercised
    if n >= 2 && rng.random_bool(0.5) {
        let c = codes[0];
        let other = if c / 10 == 1 { c + 10 } else { c - 10 };
        if !codes.contains(&other) {
            codes[1] = other;
        }
    }
    let absent = if n >= 2 && rng.random_bool(0.2) { Some(codes[n - 1]) } else { None };
    let teeth = codes.iter().map(|c| {
        let fdi = FdiTooth::new(*c).unwrap();
        if Some(*c) == absent {
            ToothState::absent(fdi, Vec3::ZERO, 0.05)
        } else {
            ToothState::new(fdi, Vec3::new(*c as f64, 0.0, 0.0), UnitQuaternion::IDENTITY, 0.9)
        }
    });
    let arch = ArchState::new(Arch::Upper, teeth).unwrap();

    let present: Vec<u8> = codes.iter().copied().filter(|c| Some(*c) != absent).collect();
    let planned = rng.random_range(1..=present.len());
    let ranges = [3.0, 3.0, 2.0, 16.0, 12.0, 45.0];
    let entries = present[..planned].iter().map(|c| {
        let mut v = [0.0; 6];
        for (i, r) in ranges.iter().enumerate() {
            if rng.random_bool(0.65) {
                v[i] = rng.random_range(-r..*r);
            }
        }
        (FdiTooth::new(*c).unwrap(), ToothMovement::new(v[0], v[1], v[2], v[3], v[4], v[5]))
    });
    let plan = MovementPlan::new(entries.collect::<Vec<_>>()).unwrap();

    let crowding = match rng.random_range(0..3) {
        0 => None,
        1 => Some(CrowdingMetadata::default()),
        _ => {
            let contacts = (0..rng.random_range(1..4))
                .map(|_| ContactOverlap {
                    mesial: FdiTooth::new(11).unwrap(),
                    distal: FdiTooth::new(12).unwrap(),
                    overlap_mm: rng.random_range(0.0..2.5),
                })
                .collect();
            Some(CrowdingMetadata { contacts })
        }
    };
    (arch, plan, crowding)
}

// ---- presence gating -----------------------------------------------------

pub const SLOTS: usize = 16;
pub const GROUPS: usize = 5;

/// Selected column per channel after gating `rows` (80 rows, N + 1 values
/// each, last is null) with `presence`. Ties keep the earliest column.
pub fn brute_char_columns(rows: &[Vec<f64>], presence: &[f64; SLOTS]) -> Vec<usize> {
    let mut picks = Vec::with_capacity(rows.len());
    for (channel, row) in rows.iter().enumerate() {
        let p = presence[channel / GROUPS];
        let null = row.len() - 1;
        let gated = |i: usize| if i == null { (1.0 - p) * row[i] } else { p * row[i] };
        let mut best = 0;
        let mut best_v = gated(0);
        for i in 1..row.len() {
            let v = gated(i);
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        picks.push(best);
    }
    picks
}

/// Cloud centroid shifted by half the longest bounding-box edge along +y.
pub fn brute_null_point(points: &[Vec3]) -> Vec3 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        sx += p.x;
        sy += p.y;
        sz += p.z;
        for (i, v) in [p.x, p.y, p.z].into_iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    let edge = (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    Vec3::new(sx / n, sy / n + edge / 2.0, sz / n)
}

/// Random cloud of 1..=50 points, heatmap rows and presence. Some rows are
/// quantised to a few levels so ties occur; null values are strictly
/// positive.
pub fn random_char_case(rng: &mut ChaCha8Rng) -> (Vec<Vec3>, Vec<Vec<f64>>, [f64; SLOTS]) {
    let n = rng.random_range(1..=50usize);
    let points: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.random_range(-30.0..30.0), rng.random_range(-10.0..40.0), rng.random_range(-5.0..5.0)))
        .collect();
    let quantise = rng.random_bool(0.3);
    let rows = (0..SLOTS * GROUPS)
        .map(|_| {
            let mut row: Vec<f64> = (0..n)
                .map(|_| {
                    let v: f64 = rng.random_range(0.0..1.0);
                    if quantise {
                        (v * 4.0).floor() / 4.0
                    } else {
                        v
                    }
                })
                .collect();
            row.push(rng.random_range(1e-6..1.0));
            row
        })
        .collect();
    let mut presence = [0.0; SLOTS];
    for p in &mut presence {
        *p = match rng.random_range(0..6) {
            0 => 0.0,
            1 => 1.0,
            2 => 0.5,
            _ => rng.random_range(0.0..=1.0),
        };
    }
    (points, rows, presence)
}
