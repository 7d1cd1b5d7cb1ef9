use orthoplan_core::agents::AgentId;
use orthoplan_core::benchmark::{enumerate_suite, run_benchmark, BenchmarkConfig, BenchmarkRun};
use orthoplan_core::orchestrator::{FusionConfig, FusionMode};
use orthoplan_core::scoring::ScoringEngine;

fn modes() -> Vec<FusionConfig> {
    [
        FusionMode::Parallel,
        FusionMode::Sequential,
        FusionMode::SingleAgent(AgentId::Segmentation),
        FusionMode::SingleAgent(AgentId::Landmark),
    ]
    .into_iter()
    .map(FusionConfig::with_mode)
    .collect()
}

fn run(n: usize, seed: u64, threads: usize) -> BenchmarkRun {
    let suite = enumerate_suite(n, seed).unwrap();
    let cfg = BenchmarkConfig { threads, ..BenchmarkConfig::default() };
    run_benchmark(&suite, &modes(), &ScoringEngine::default(), &cfg).unwrap()
}

fn strip_timing(run: &BenchmarkRun) -> String {
    serde_json::to_string(&run.report.without_timing()).unwrap()
}

#[test]
fn thread_count_does_not_change_the_report() {
    let a = run(36, 5, 1);
    let b = run(36, 5, 4);
    assert_eq!(strip_timing(&a), strip_timing(&b));
    assert!(a.report.timing.is_some());
}

#[test]
fn different_seeds_give_different_reports() {
    assert_ne!(strip_timing(&run(36, 1, 0)), strip_timing(&run(36, 2, 0)));
}

#[test]
fn aggregates_follow_from_rows() {
    let r = run(40, 9, 0);
    assert_eq!(r.report.modes.len(), 4);
    for m in &r.report.modes {
        let rows: Vec<_> = r.rows.iter().filter(|row| row.mode == m.mode).collect();
        assert_eq!(rows.len(), 40);
        assert!(rows.windows(2).all(|w| w[0].index < w[1].index));
        let q: Vec<f64> = rows.iter().filter_map(|row| row.composite).collect();
        assert_eq!(q.len(), m.completed);
        assert!(q.iter().all(|v| (0.0..=100.0).contains(v)));
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        let sd = (q.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / q.len() as f64).sqrt();
        assert!((m.mean_quality - mean).abs() < 1e-9);
        assert!((m.sd_quality - sd).abs() < 1e-9, "population SD expected");
        let feasible = rows.iter().filter(|row| row.feasible == Some(true)).count();
        assert!((m.feasibility - feasible as f64 / m.n as f64).abs() < 1e-12);
        for row in &rows {
            if let (Some(c), Some(f)) = (row.composite, row.feasible) {
                assert_eq!(f, c >= 60.0 && row.critical == 0);
            }
        }
        assert_eq!(m.grades.values().sum::<usize>(), m.completed);
    }
    let seq = r.report.mode("sequential").unwrap();
    assert!(seq.agent1_invocation_rate <= 1.0);
    assert_eq!(r.report.mode("agent2").unwrap().agent1_invocation_rate, 0.0);
    assert_eq!(r.report.mode("agent1").unwrap().agent1_invocation_rate, 1.0);
}

#[test]
fn csv_has_one_line_per_row() {
    let r = run(12, 3, 0);
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), r.rows.len() + 1);
    assert!(text.lines().next().unwrap().starts_with("index,"));
}
