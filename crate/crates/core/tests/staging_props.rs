use orthoplan_core::dental::{Arch, ArchState, FdiTooth, MovementPlan, ToothMovement, ToothState};
use orthoplan_core::geometry::{euler_to_quaternion, UnitQuaternion, Vec3};
use orthoplan_core::staging::{aligner_count, frames_to_json, generate_frames, StagingConfig};
use proptest::prelude::*;

const UPPER: [u8; 16] = [18, 17, 16, 15, 14, 13, 12, 11, 21, 22, 23, 24, 25, 26, 27, 28];

fn movement() -> impl Strategy<Value = ToothMovement> {
    (-4.0f64..4.0, -3.0f64..3.0, -2.0f64..2.0, -15.0f64..15.0, -15.0f64..15.0, -40.0f64..40.0)
        .prop_map(|(a, b, c, d, e, f)| ToothMovement::new(a, b, c, d, e, f))
}

fn orientation() -> impl Strategy<Value = UnitQuaternion> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.1f64..3.0)
        .prop_map(|(x, y, z, angle)| UnitQuaternion::from_axis_angle(Vec3::new(x, y, z + 1e-3), angle).unwrap())
}

/// Arch of up to 6 teeth with random poses, and a plan over a subset.
fn case() -> impl Strategy<Value = (ArchState, MovementPlan)> {
    proptest::sample::subsequence(UPPER.to_vec(), 1..=6)
        .prop_flat_map(|codes| {
            let n = codes.len();
            (
                Just(codes),
                proptest::collection::vec((orientation(), -30.0f64..30.0, 0.0f64..40.0), n),
                proptest::collection::vec(movement(), n),
                1..=n,
            )
        })
        .prop_map(|(codes, poses, moves, planned)| {
            let fdis: Vec<FdiTooth> = codes.iter().map(|c| FdiTooth::new(*c).unwrap()).collect();
            let arch = ArchState::new(
                Arch::Upper,
                fdis.iter().zip(&poses).map(|(f, (q, x, y))| ToothState::new(*f, Vec3::new(*x, *y, 0.0), *q, 1.0)),
            )
            .unwrap();
            let plan = MovementPlan::new(fdis[..planned].iter().copied().zip(moves)).unwrap();
            (arch, plan)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn frame_layout((arch, plan) in case()) {
        let cfg = StagingConfig::default();
        let (frames, summary) = generate_frames(&arch, &plan, &cfg).unwrap();
        let a = aligner_count(&plan, &cfg);
        prop_assert_eq!(summary.aligner_count, a);
        prop_assert_eq!(frames.len() as u32, a * cfg.frames_per_aligner + 1);
        prop_assert_eq!(frames[0].t, 0.0);
        prop_assert_eq!(frames.last().unwrap().t, 1.0);
        for (i, w) in frames.windows(2).enumerate() {
            prop_assert_eq!(w[0].index as usize, i);
            prop_assert!(w[1].t > w[0].t);
        }
    }

    #[test]
    fn endpoints_are_exact((arch, plan) in case()) {
        let (frames, _) = generate_frames(&arch, &plan, &StagingConfig::default()).unwrap();
        let last = frames.last().unwrap();
        for (fdi, m) in plan.iter() {
            let start = arch.get(fdi).unwrap();
            let pose = &last.poses[&fdi];
            prop_assert!((pose.centroid - (start.centroid + m.translation())).norm() <= 1e-9);
            let target = start.orientation.compose(&euler_to_quaternion(m.rotation()).unwrap());
            prop_assert!(pose.orientation.angle_to(&target) < 1e-6);
        }
    }

    #[test]
    fn teeth_approach_their_targets_monotonically((arch, plan) in case()) {
        let (frames, _) = generate_frames(&arch, &plan, &StagingConfig::default()).unwrap();
        for (fdi, m) in plan.iter() {
            let start = arch.get(fdi).unwrap();
            let target_c = start.centroid + m.translation();
            let target_q = start.orientation.compose(&euler_to_quaternion(m.rotation()).unwrap());
            for w in frames.windows(2) {
                let (p0, p1) = (&w[0].poses[&fdi], &w[1].poses[&fdi]);
                for axis in 0..3 {
                    let d0 = (p0.centroid.component(axis) - target_c.component(axis)).abs();
                    let d1 = (p1.centroid.component(axis) - target_c.component(axis)).abs();
                    prop_assert!(d1 <= d0 + 1e-12, "{fdi} axis {axis}: {d0} -> {d1}");
                }
                prop_assert!(p1.orientation.angle_to(&target_q) <= p0.orientation.angle_to(&target_q) + 1e-9);
            }
        }
    }

    #[test]
    fn extruding_teeth_wait((arch, plan) in case()) {
        let cfg = StagingConfig::default();
        let (frames, _) = generate_frames(&arch, &plan, &cfg).unwrap();
        for (fdi, m) in plan.iter().filter(|(_, m)| m.tz < 0.0) {
            let first = &frames[0].poses[&fdi];
            for f in frames.iter().filter(|f| f.t < cfg.extrusion_start) {
                prop_assert_eq!(&f.poses[&fdi], first, "{} moved at t = {}", fdi, f.t);
            }
            // and it is moving afterwards
            if m.translation().norm() > 0.0 {
                let later = frames.iter().find(|f| f.t > cfg.extrusion_start).unwrap();
                prop_assert!(later.poses[&fdi].centroid != first.centroid);
            }
        }
    }

    #[test]
    fn non_extruding_teeth_stay_within_budget((arch, plan) in case()) {
        let cfg = StagingConfig::default();
        let (frames, summary) = generate_frames(&arch, &plan, &cfg).unwrap();
        let r = cfg.frames_per_aligner as usize;
        for (fdi, m) in plan.iter().filter(|(_, m)| m.tz >= 0.0) {
            let omega = m.rotation().norm();
            for k in 0..summary.aligner_count as usize {
                let (a, b) = (&frames[k * r], &frames[(k + 1) * r]);
                let step = (b.poses[&fdi].centroid - a.poses[&fdi].centroid).norm();
                prop_assert!(step <= cfg.delta_trans + 1e-9, "{fdi} aligner {k}: {step} mm");
                prop_assert!(omega * (b.t - a.t) <= cfg.delta_rot + 1e-9);
            }
        }
    }

    #[test]
    fn unplanned_teeth_do_not_move((arch, plan) in case()) {
        let (frames, _) = generate_frames(&arch, &plan, &StagingConfig::default()).unwrap();
        for t in arch.present_teeth().filter(|t| plan.get(t.fdi).is_none()) {
            for f in &frames {
                prop_assert_eq!(f.poses[&t.fdi].centroid, t.centroid);
                prop_assert_eq!(f.poses[&t.fdi].orientation, t.orientation);
            }
        }
    }

    #[test]
    fn serialisation_is_deterministic((arch, plan) in case()) {
        let cfg = StagingConfig::default();
        let (f1, s1) = generate_frames(&arch, &plan, &cfg).unwrap();
        let (f2, s2) = generate_frames(&arch, &plan, &cfg).unwrap();
        prop_assert_eq!(frames_to_json(&f1, &s1, &cfg).unwrap(), frames_to_json(&f2, &s2, &cfg).unwrap());
    }
}
