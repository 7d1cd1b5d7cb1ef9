use orthoplan_core::dental::{Arch, ArchState, FdiTooth, MovementPlan, ToothMovement, ToothState};
use orthoplan_core::geometry::{UnitQuaternion, Vec3};
use orthoplan_core::scoring::{
    composite, evaluate_principles, sub_scores, v1_score, Finding, Grade, ScoringConfig, ScoringEngine, Severity,
    SubScores,
};
use orthoplan_core::staging::{staging_summary_only, StagingConfig};
use proptest::prelude::*;

const UPPER: [u8; 16] = [18, 17, 16, 15, 14, 13, 12, 11, 21, 22, 23, 24, 25, 26, 27, 28];

fn full_arch() -> ArchState {
    ArchState::new(
        Arch::Upper,
        UPPER.iter().map(|c| ToothState::new(FdiTooth::new(*c).unwrap(), Vec3::ZERO, UnitQuaternion::IDENTITY, 1.0)),
    )
    .unwrap()
}

fn movement() -> impl Strategy<Value = ToothMovement> {
    (-5.0f64..5.0, -5.0f64..5.0, -3.0f64..3.0, -20.0f64..20.0, -20.0f64..20.0, -60.0f64..60.0)
        .prop_map(|(a, b, c, d, e, f)| ToothMovement::new(a, b, c, d, e, f))
}

fn plan() -> impl Strategy<Value = MovementPlan> {
    proptest::sample::subsequence(UPPER.to_vec(), 1..=16)
        .prop_flat_map(|codes| {
            let n = codes.len();
            (Just(codes), proptest::collection::vec(movement(), n))
        })
        .prop_map(|(codes, moves)| {
            MovementPlan::new(codes.into_iter().map(|c| FdiTooth::new(c).unwrap()).zip(moves)).unwrap()
        })
}

fn bio(plan: &MovementPlan, cfg: &ScoringConfig) -> f64 {
    let staging = StagingConfig::default();
    let summary = staging_summary_only(plan, &staging);
    sub_scores(plan, &full_arch(), &summary, &staging, None, cfg).bio
}

fn grow_axis(m: &ToothMovement, axis: usize, by: f64) -> ToothMovement {
    let mut v = [m.tx, m.ty, m.tz, m.rx, m.ry, m.rz];
    v[axis] += if v[axis] < 0.0 { -by } else { by };
    ToothMovement::new(v[0], v[1], v[2], v[3], v[4], v[5])
}

proptest! {
    #[test]
    fn larger_movement_never_raises_bio_or_v1(p in plan(), pick in any::<prop::sample::Index>(), axis in 0usize..6, by in 0.0f64..10.0) {
        let cfg = ScoringConfig::default();
        let teeth: Vec<FdiTooth> = p.teeth().collect();
        let fdi = teeth[pick.index(teeth.len())];
        let mut bigger = p.clone();
        bigger.set(fdi, grow_axis(p.get(fdi).unwrap(), axis, by));
        prop_assert!(bio(&bigger, &cfg) <= bio(&p, &cfg));
        prop_assert!(v1_score(&bigger, &cfg) <= v1_score(&p, &cfg));
    }

    #[test]
    fn over_engineering_factor_can_move_into_the_plan(p in plan()) {
        let engineered = ScoringConfig::default();
        let unit = ScoringConfig { over_engineer: 1.0, ..engineered };
        let scaled = p.map(|m| m.scaled(engineered.over_engineer));
        let f1 = serde_json::to_string(&evaluate_principles(&p, &engineered)).unwrap();
        let f2 = serde_json::to_string(&evaluate_principles(&scaled, &unit)).unwrap();
        prop_assert_eq!(f1, f2);
        prop_assert_eq!(bio(&p, &engineered).to_bits(), bio(&scaled, &unit).to_bits());
    }

    #[test]
    fn scores_stay_in_range(p in plan()) {
        let s = ScoringEngine::default().score(&p, &full_arch(), None).unwrap();
        for v in s.sub_scores.as_array() {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        prop_assert!((0.0..=100.0).contains(&s.composite));
        prop_assert!((0.0..=100.0).contains(&s.v1_score));
        prop_assert!(s.composite <= s.composite_raw);
        prop_assert_eq!(s.grade, Grade::from_score(s.composite));
    }

    #[test]
    fn no_findings_means_no_penalty(values in proptest::array::uniform6(0.0f64..=100.0)) {
        let sub = SubScores {
            bio: values[0], staging: values[1], attachments: values[2],
            ipr: values[3], occlusion: values[4], predictability: values[5],
        };
        let s = composite(sub, Vec::new(), 100.0);
        prop_assert_eq!(s.composite, s.composite_raw);
        let info = vec![Finding { severity: Severity::Info, code: "ATTACHMENT_RECOMMENDED".into(), fdi: None, message: String::new(), principle: None }];
        prop_assert_eq!(composite(sub, info, 100.0).composite, s.composite_raw);
    }

    #[test]
    fn each_critical_costs_exactly_fifteen_percent(values in proptest::array::uniform6(1.0f64..=100.0), n in 0usize..6) {
        let sub = SubScores {
            bio: values[0], staging: values[1], attachments: values[2],
            ipr: values[3], occlusion: values[4], predictability: values[5],
        };
        let crit = |k: usize| (0..k).map(|_| Finding {
            severity: Severity::Critical, code: "EXTRUSION_OVER_LIMIT".into(), fdi: None, message: String::new(), principle: Some(1),
        }).collect::<Vec<_>>();
        let before = composite(sub, crit(n), 100.0).composite;
        let after = composite(sub, crit(n + 1), 100.0).composite;
        prop_assert!(after < before);
        prop_assert!((after - before * 0.85).abs() <= 1e-12 * before.max(1.0));
    }
}
