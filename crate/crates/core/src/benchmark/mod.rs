//! Synthetic benchmark: scenario suite, end-to-end evaluation per fusion
//! mode, and the aggregate report.
//!
//! A plan is feasible when it has no critical findings and a composite of
//! at least 60.

mod generator;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub(crate) use generator::case_from_plan;
pub use generator::{
    generate_scenario, Archetype, CrowdingSeverity, GeneratorConfig, LandmarkTruth, ScenarioSpec, SyntheticCase,
};

use crate::agents::{AgentId, LandmarkAgent, OracleNoise, SegmentationAgent, SyntheticOracleSource};
use crate::dental::{ArchState, MovementPlan, ToothMovement, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::orchestrator::{FusionConfig, Orchestrator};
use crate::scoring::{Grade, ScoringEngine, Severity, TreatmentScore};

pub const FEASIBLE_MIN_COMPOSITE: f64 = 60.0;

pub fn is_feasible(score: &TreatmentScore) -> bool {
    !score.has_critical() && score.composite >= FEASIBLE_MIN_COMPOSITE
}

/// splitmix64 finaliser, for well-spread per-scenario seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const GRID_CELLS: usize = 36;

/// Round-robin over the 4 x 3 x 3 grid of archetype, severity and missing
/// count, one derived seed per scenario.
pub fn enumerate_suite(n: usize, master_seed: u64) -> Result<Vec<ScenarioSpec>> {
    if n == 0 {
        return Err(Error::invalid("suite size must be at least 1"));
    }
    Ok((0..n)
        .map(|i| {
            let cell = i % GRID_CELLS;
            ScenarioSpec {
                archetype: Archetype::ALL[cell / 9],
                severity: CrowdingSeverity::ALL[(cell / 3) % 3],
                missing_count: (cell % 3) as u8,
                seed: mix(master_seed ^ mix(i as u64)),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub noise: OracleNoise,
    pub generator: GeneratorConfig,
    /// Worker threads; 0 uses one per core.
    pub threads: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            noise: OracleNoise { heatmap_sd: 0.05, presence_jitter: 0.05, presence_flip_prob: 0.0 },
            generator: GeneratorConfig::default(),
            threads: 0,
        }
    }
}

/// One scenario evaluated under one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub index: usize,
    pub archetype: Archetype,
    pub severity: CrowdingSeverity,
    pub missing_count: u8,
    pub seed: u64,
    pub mode: String,
    pub composite: Option<f64>,
    pub composite_raw: Option<f64>,
    pub v1_score: Option<f64>,
    pub grade: Option<Grade>,
    pub feasible: Option<bool>,
    pub critical: usize,
    pub warning: usize,
    pub centroid_error_mm: Option<f64>,
    pub agent1_invoked: bool,
    pub elapsed_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: String,
    pub n: usize,
    pub completed: usize,
    pub mean_quality: f64,
    pub sd_quality: f64,
    pub feasibility: f64,
    pub mean_v1_score: f64,
    pub mean_centroid_error_mm: f64,
    pub agent1_invocation_rate: f64,
    pub grades: BTreeMap<Grade, usize>,
    pub failures: Vec<ScenarioFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTiming {
    pub mean_s: f64,
    pub sd_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub n: usize,
    pub modes: Vec<ModeReport>,
    /// Wall-clock figures, kept apart so the rest of the report is
    /// reproducible byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<BTreeMap<String, ModeTiming>>,
}

impl BenchmarkReport {
    pub fn without_timing(&self) -> Self {
        Self { timing: None, ..self.clone() }
    }

    pub fn mode(&self, name: &str) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    pub rows: Vec<ScenarioRow>,
}

impl BenchmarkRun {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(CsvRow::from(row)).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    index: usize,
    archetype: &'static str,
    severity: &'static str,
    missing_count: u8,
    seed: u64,
    mode: &'a str,
    composite: Option<f64>,
    composite_raw: Option<f64>,
    v1_score: Option<f64>,
    grade: Option<String>,
    feasible: Option<bool>,
    critical: usize,
    warning: usize,
    centroid_error_mm: Option<f64>,
    agent1_invoked: bool,
    elapsed_s: f64,
    error: Option<&'a str>,
}

impl<'a> From<&'a ScenarioRow> for CsvRow<'a> {
    fn from(r: &'a ScenarioRow) -> Self {
        CsvRow {
            index: r.index,
            archetype: r.archetype.name(),
            severity: r.severity.name(),
            missing_count: r.missing_count,
            seed: r.seed,
            mode: &r.mode,
            composite: r.composite,
            composite_raw: r.composite_raw,
            v1_score: r.v1_score,
            grade: r.grade.map(|g| g.to_string()),
            feasible: r.feasible,
            critical: r.critical,
            warning: r.warning,
            centroid_error_mm: r.centroid_error_mm,
            agent1_invoked: r.agent1_invoked,
            elapsed_s: r.elapsed_s,
            error: r.error.as_deref(),
        }
    }
}

/// Re-planned translations below this are floating-point residue.
pub const REPLAN_RESOLUTION_MM: f64 = 1e-9;

/// Plan rebuilt from estimated centroids: translations move each estimated
/// centroid onto its ideal position, rotations come from the target plan.
pub fn replan(case: &SyntheticCase, estimate: &ArchState) -> Result<MovementPlan> {
    let entries: Vec<_> = case
        .target_plan
        .iter()
        .filter_map(|(fdi, target)| {
            let tooth = estimate.get(fdi).filter(|t| t.present)?;
            let d = case.ideal[&fdi] - tooth.centroid;
            let snap = |v: f64| if v.abs() < REPLAN_RESOLUTION_MM { 0.0 } else { v };
            let d = Vec3::new(snap(d.x), snap(d.y), snap(d.z));
            Some((fdi, ToothMovement::new(d.x, d.y, d.z, target.rx, target.ry, target.rz)))
        })
        .collect();
    MovementPlan::new(entries)
}

fn mean_centroid_error(case: &SyntheticCase, estimate: &ArchState) -> Option<f64> {
    let errs: Vec<f64> = case
        .ground_truth
        .present_teeth()
        .filter_map(|gt| estimate.get(gt.fdi).filter(|t| t.present).map(|t| t.centroid.distance(gt.centroid)))
        .collect();
    (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
}

struct Outcome {
    score: TreatmentScore,
    centroid_error: Option<f64>,
    agent1_invoked: bool,
}

/// Agents, fusion, re-planning and scoring for one case under one mode.
pub fn evaluate_case(
    case: &SyntheticCase,
    mode: &FusionConfig,
    engine: &ScoringEngine,
    noise: OracleNoise,
) -> Result<(TreatmentScore, ArchState, MovementPlan)> {
    let (outcome, arch, plan) = evaluate(case, mode, engine, noise)?;
    Ok((outcome.score, arch, plan))
}

fn evaluate(
    case: &SyntheticCase,
    mode: &FusionConfig,
    engine: &ScoringEngine,
    noise: OracleNoise,
) -> Result<(Outcome, ArchState, MovementPlan)> {
    let agent1 = SegmentationAgent::new().with_seed(case.spec.seed);
    let source = SyntheticOracleSource::new(case.landmark_map(), case.presence, noise, mix(case.spec.seed))?;
    let agent2 = LandmarkAgent::new(source);
    let orchestrator = Orchestrator::new(*mode)?;
    let (arch, prov) = orchestrator.run(&agent1, &agent2, &case.cloud, case.ground_truth.arch())?;
    let plan = replan(case, &arch)?;
    let score = engine.score(&plan, &arch, Some(&case.crowding))?;
    let outcome = Outcome {
        score,
        centroid_error: mean_centroid_error(case, &arch),
        agent1_invoked: prov.invoked(AgentId::Segmentation),
    };
    Ok((outcome, arch, plan))
}

fn population_sd(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn scenario_rows(
    index: usize,
    spec: &ScenarioSpec,
    modes: &[FusionConfig],
    engine: &ScoringEngine,
    cfg: &BenchmarkConfig,
) -> Vec<ScenarioRow> {
    let case = generate_scenario(spec, &cfg.generator);
    modes
        .iter()
        .map(|mode| {
            let start = Instant::now();
            let result = case
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|c| evaluate(c, mode, engine, cfg.noise).map_err(|e| e.to_string()));
            let elapsed_s = start.elapsed().as_secs_f64();
            let mut row = ScenarioRow {
                index,
                archetype: spec.archetype,
                severity: spec.severity,
                missing_count: spec.missing_count,
                seed: spec.seed,
                mode: mode.mode.to_string(),
                composite: None,
                composite_raw: None,
                v1_score: None,
                grade: None,
                feasible: None,
                critical: 0,
                warning: 0,
                centroid_error_mm: None,
                agent1_invoked: false,
                elapsed_s,
                error: None,
            };
            match result {
                Ok((o, _, _)) => {
                    row.composite = Some(o.score.composite);
                    row.composite_raw = Some(o.score.composite_raw);
                    row.v1_score = Some(o.score.v1_score);
                    row.grade = Some(o.score.grade);
                    row.feasible = Some(is_feasible(&o.score));
                    row.critical = o.score.count(Severity::Critical);
                    row.warning = o.score.count(Severity::Warning);
                    row.centroid_error_mm = o.centroid_error;
                    row.agent1_invoked = o.agent1_invoked;
                }
                Err(e) => row.error = Some(e),
            }
            row
        })
        .collect()
}

fn aggregate(mode: &str, n: usize, rows: &[&ScenarioRow]) -> (ModeReport, ModeTiming) {
    let ok: Vec<&&ScenarioRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let quality: Vec<f64> = ok.iter().filter_map(|r| r.composite).collect();
    let feasible = ok.iter().filter(|r| r.feasible == Some(true)).count();
    let mut grades = BTreeMap::new();
    for g in ok.iter().filter_map(|r| r.grade) {
        *grades.entry(g).or_insert(0) += 1;
    }
    let frac = |k: usize| if ok.is_empty() { 0.0 } else { k as f64 / ok.len() as f64 };
    let report = ModeReport {
        mode: mode.to_string(),
        n,
        completed: ok.len(),
        mean_quality: mean(&quality),
        sd_quality: population_sd(&quality),
        feasibility: frac(feasible),
        mean_v1_score: mean(&ok.iter().filter_map(|r| r.v1_score).collect::<Vec<_>>()),
        mean_centroid_error_mm: mean(&ok.iter().filter_map(|r| r.centroid_error_mm).collect::<Vec<_>>()),
        agent1_invocation_rate: frac(ok.iter().filter(|r| r.agent1_invoked).count()),
        grades,
        failures: rows
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| ScenarioFailure { index: r.index, error: e.clone() }))
            .collect(),
    };
    let times: Vec<f64> = rows.iter().map(|r| r.elapsed_s).collect();
    let timing = ModeTiming { mean_s: mean(&times), sd_s: population_sd(&times), total_s: times.iter().sum() };
    (report, timing)
}

pub fn run_benchmark(
    suite: &[ScenarioSpec],
    modes: &[FusionConfig],
    engine: &ScoringEngine,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkRun> {
    if suite.is_empty() {
        return Err(Error::invalid("benchmark suite is empty"));
    }
    if modes.is_empty() {
        return Err(Error::invalid("no pipeline modes requested"));
    }
    let work = || -> Vec<Vec<ScenarioRow>> {
        suite.par_iter().enumerate().map(|(i, spec)| scenario_rows(i, spec, modes, engine, cfg)).collect()
    };
    let per_scenario = if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)
    } else {
        work()
    };
    let rows: Vec<ScenarioRow> = per_scenario.into_iter().flatten().collect();

    let mut reports = Vec::new();
    let mut timing = BTreeMap::new();
    for mode in modes {
        let name = mode.mode.to_string();
        let mode_rows: Vec<&ScenarioRow> = rows.iter().filter(|r| r.mode == name).collect();
        let (report, t) = aggregate(&name, suite.len(), &mode_rows);
        reports.push(report);
        timing.insert(name, t);
    }
    Ok(BenchmarkRun {
        report: BenchmarkReport {
            schema_version: SCHEMA_VERSION,
            n: suite.len(),
            modes: reports,
            timing: Some(timing),
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::FusionMode;

    #[test]
    fn suite_covers_the_grid() {
        let suite = enumerate_suite(200, 42).unwrap();
        assert_eq!(suite.len(), 200);
        let mut cells: BTreeMap<(Archetype, CrowdingSeverity, u8), usize> = BTreeMap::new();
        for s in &suite {
            *cells.entry((s.archetype, s.severity, s.missing_count)).or_default() += 1;
        }
        assert_eq!(cells.len(), 36);
        assert!(cells.values().all(|c| *c >= 5));
        let seeds: std::collections::BTreeSet<u64> = suite.iter().map(|s| s.seed).collect();
        assert_eq!(seeds.len(), 200);
        assert_eq!(suite, enumerate_suite(200, 42).unwrap());
        assert_ne!(suite, enumerate_suite(200, 43).unwrap());
        assert!(enumerate_suite(0, 1).is_err());
    }

    #[test]
    fn one_cycle_is_one_per_cell() {
        let suite = enumerate_suite(36, 7).unwrap();
        let cells: std::collections::BTreeSet<_> =
            suite.iter().map(|s| (s.archetype, s.severity, s.missing_count)).collect();
        assert_eq!(cells.len(), 36);
    }

    #[test]
    fn population_sd_divides_by_n() {
        assert_eq!(population_sd(&[1.0, 3.0]), 1.0);
        assert_eq!(population_sd(&[]), 0.0);
    }

    #[test]
    fn zero_noise_recovers_ground_truth() {
        let suite = enumerate_suite(12, 5).unwrap();
        let engine = ScoringEngine::default();
        for spec in &suite {
            let case = generate_scenario(spec, &GeneratorConfig::default()).unwrap();
            let (_, arch, _) = evaluate_case(&case, &FusionConfig::default(), &engine, OracleNoise::default()).unwrap();
            for gt in case.ground_truth.present_teeth() {
                let est = arch.get(gt.fdi).unwrap();
                assert!(est.present);
                assert!(est.centroid.distance(gt.centroid) < 1e-6, "{} {:?}", gt.fdi, est.centroid - gt.centroid);
            }
        }
    }

    #[test]
    fn zero_movement_suite_is_perfect() {
        let suite = enumerate_suite(8, 1).unwrap();
        let cfg = BenchmarkConfig {
            noise: OracleNoise::default(),
            generator: GeneratorConfig { movement_scale: 0.0, ..GeneratorConfig::default() },
            threads: 2,
        };
        let modes: Vec<FusionConfig> =
            [FusionMode::Parallel, FusionMode::Sequential, FusionMode::SingleAgent(AgentId::Segmentation)]
                .into_iter()
                .map(FusionConfig::with_mode)
                .collect();
        let run = run_benchmark(&suite, &modes, &ScoringEngine::default(), &cfg).unwrap();
        for m in &run.report.modes {
            assert_eq!(m.completed, 8, "{:?}", m.failures);
            assert!((m.mean_quality - 100.0).abs() < 1e-6, "{}", m.mean_quality);
            assert_eq!(m.feasibility, 1.0);
        }
    }
}
