mod support;

use orthoplan_core::scoring::{ScoringEngine, Severity};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::oracle::{brute_score, random_scoring_case};

#[test]
fn engine_matches_brute_force_on_small_arches() {
    let engine = ScoringEngine::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20_241);
    // cases where each sub-score (then criticals, then the distalisation rule) is not trivially maxed
    let mut hit = [0usize; 8];
    for case in 0..500 {
        let (arch, plan, crowding) = random_scoring_case(&mut rng);
        let got = engine.score(&plan, &arch, crowding.as_ref()).unwrap();
        let want = brute_score(&plan, &arch, crowding.as_ref());
        let sub = got.sub_scores.as_array();
        for (i, (g, w)) in sub.iter().zip(want.sub).enumerate() {
            assert!((g - w).abs() <= 1e-9, "case {case} sub-score {i}: {g} vs {w}");
        }
        assert_eq!(got.count(Severity::Critical), want.critical, "case {case}");
        assert_eq!(got.count(Severity::Warning), want.warning, "case {case}");
        assert!((got.composite_raw - want.raw).abs() <= 1e-9, "case {case}");
        assert!((got.composite - want.composite).abs() <= 1e-9, "case {case}: {} vs {}", got.composite, want.composite);
        assert!((got.v1_score - want.v1).abs() <= 1e-9, "case {case}");
        for (i, v) in want.sub.iter().enumerate() {
            hit[i] += usize::from(*v < 100.0);
        }
        hit[6] += usize::from(want.critical > 0);
        hit[7] += usize::from(got.findings.iter().any(|f| f.principle == Some(2)));
    }
    assert!(hit[..7].iter().all(|h| *h >= 20), "{hit:?}");
    assert!(hit[7] >= 1, "{hit:?}");
}
