//! Patient documents in a single JSON-lines file.
//!
//! Every write appends the full record as one line; on open the last line
//! per id wins and the file is compacted if it holds superseded versions.
//! Frame sequences live next to it in `frames/<content hash>.json`, written
//! before the record line that references them.
//!
//! Updates are optimistic: the caller names the version it read, and the
//! write is refused if the stored version has moved on.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use orthoplan_core::dental::{ArchState, MovementPlan, SCHEMA_VERSION};
use orthoplan_core::orchestrator::Provenance;
use orthoplan_core::scoring::{CrowdingMetadata, Grade, TreatmentScore};
use orthoplan_core::staging::StagingSummary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::pipeline::Evaluation;

const RECORDS_FILE: &str = "patients.jsonl";
const FRAMES_DIR: &str = "frames";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub schema_version: u32,
    pub id: String,
    pub label: String,
    /// Starts at 1 and increases with every stored change.
    pub version: u64,
    /// SHA-256 over arch, plan, crowding, score and the frame sequence.
    pub content_hash: String,
    pub created_at: String,
    pub updated_at: String,
    pub arch: ArchState,
    pub plan: MovementPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crowding: Option<CrowdingMetadata>,
    pub score: TreatmentScore,
    pub staging: StagingSummary,
    /// URL path serving the frame sequence of this version.
    pub frames_ref: String,
    /// Agent runs, for patients created from a scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub id: String,
    pub label: String,
    pub version: u64,
    pub composite: f64,
    pub grade: Grade,
    pub critical: usize,
    pub updated_at: String,
}

impl From<&PatientRecord> for PatientSummary {
    fn from(r: &PatientRecord) -> Self {
        Self {
            id: r.id.clone(),
            label: r.label.clone(),
            version: r.version,
            composite: r.score.composite,
            grade: r.score.grade,
            critical: r.score.count(orthoplan_core::scoring::Severity::Critical),
            updated_at: r.updated_at.clone(),
        }
    }
}

pub fn content_hash(
    arch: &ArchState,
    plan: &MovementPlan,
    crowding: Option<&CrowdingMetadata>,
    score: &TreatmentScore,
    frames_json: &[u8],
) -> String {
    #[derive(Serialize)]
    struct Content<'a> {
        arch: &'a ArchState,
        plan: &'a MovementPlan,
        crowding: Option<&'a CrowdingMetadata>,
        score: &'a TreatmentScore,
    }
    let bytes = serde_json::to_vec(&Content { arch, plan, crowding, score }).expect("plain data serialises");
    let mut h = Sha256::new();
    h.update(&bytes);
    h.update(frames_json);
    hex::encode(h.finalize())
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("patient '{0}' not found")]
    NotFound(String),
    #[error("patient '{id}' is at version {current}, update was based on {expected}")]
    Conflict { id: String, expected: u64, current: u64 },
    #[error("patient '{0}' already exists")]
    Duplicate(String),
    #[error("store file {path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

struct Disk {
    dir: PathBuf,
    log: File,
}

pub struct Store {
    records: RwLock<HashMap<String, Arc<PatientRecord>>>,
    /// Frame sequences of in-memory stores; disk stores read them back from file.
    frames: RwLock<HashMap<String, Arc<Vec<u8>>>>,
    disk: Option<Mutex<Disk>>,
}

impl Store {
    /// A store that forgets everything on drop.
    pub fn in_memory() -> Self {
        Self { records: RwLock::default(), frames: RwLock::default(), disk: None }
    }

    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir.join(FRAMES_DIR))?;
        let path = dir.join(RECORDS_FILE);
        let mut records: HashMap<String, Arc<PatientRecord>> = HashMap::new();
        let mut lines = 0;
        let mut torn = false;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let all: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
            let last = all.len();
            for (i, line) in all.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<PatientRecord>(&line) {
                    Ok(r) => {
                        lines += 1;
                        records.insert(r.id.clone(), Arc::new(r));
                    }
                    // a torn final line is what an interrupted append leaves behind
                    Err(_) if i + 1 == last => torn = true,
                    Err(e) => {
                        return Err(StoreError::Corrupt { path, line: i + 1, message: e.to_string() });
                    }
                }
            }
        }
        if torn || lines != records.len() {
            compact(&path, records.values().map(Arc::as_ref))?;
        }
        let log = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            records: RwLock::new(records),
            frames: RwLock::default(),
            disk: Some(Mutex::new(Disk { dir: dir.to_path_buf(), log })),
        })
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records, oldest first.
    pub fn list(&self) -> Vec<Arc<PatientRecord>> {
        let mut all: Vec<_> = self.records.read().expect("store lock").values().cloned().collect();
        all.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        all
    }

    pub fn get(&self, id: &str) -> Option<Arc<PatientRecord>> {
        self.records.read().expect("store lock").get(id).cloned()
    }

    /// Serialized frame sequence stored under `hash`.
    pub fn frames(&self, hash: &str) -> Result<Option<Arc<Vec<u8>>>, StoreError> {
        let Some(disk) = &self.disk else {
            return Ok(self.frames.read().expect("store lock").get(hash).cloned());
        };
        let path = disk.lock().expect("store lock").dir.join(FRAMES_DIR).join(format!("{hash}.json"));
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(Arc::new(bytes))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn insert(&self, record: PatientRecord, frames: &[u8]) -> Result<Arc<PatientRecord>, StoreError> {
        let mut records = self.records.write().expect("store lock");
        if records.contains_key(&record.id) {
            return Err(StoreError::Duplicate(record.id));
        }
        self.persist(&record, frames)?;
        let record = Arc::new(record);
        records.insert(record.id.clone(), record.clone());
        Ok(record)
    }

    /// Replaces the record if it is still at `expected_version`. The new
    /// record must carry `expected_version + 1`.
    pub fn update(
        &self,
        record: PatientRecord,
        expected_version: u64,
        frames: &[u8],
    ) -> Result<Arc<PatientRecord>, StoreError> {
        let mut records = self.records.write().expect("store lock");
        let current = records.get(&record.id).ok_or_else(|| StoreError::NotFound(record.id.clone()))?;
        if current.version != expected_version {
            return Err(StoreError::Conflict {
                id: record.id.clone(),
                expected: expected_version,
                current: current.version,
            });
        }
        debug_assert_eq!(record.version, expected_version + 1);
        self.persist(&record, frames)?;
        let record = Arc::new(record);
        records.insert(record.id.clone(), record.clone());
        Ok(record)
    }

    fn persist(&self, record: &PatientRecord, frames: &[u8]) -> Result<(), StoreError> {
        let line = serde_json::to_string(record)?;
        match &self.disk {
            Some(disk) => {
                let mut disk = disk.lock().expect("store lock");
                let frames_path = disk.dir.join(FRAMES_DIR).join(format!("{}.json", record.content_hash));
                if !frames_path.exists() {
                    write_atomic(&frames_path, frames)?;
                }
                disk.log.write_all(line.as_bytes())?;
                disk.log.write_all(b"\n")?;
                disk.log.sync_data()?;
            }
            None => {
                self.frames.write().expect("store lock").insert(record.content_hash.clone(), Arc::new(frames.to_vec()));
            }
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

fn compact<'a>(path: &Path, records: impl Iterator<Item = &'a PatientRecord>) -> Result<(), StoreError> {
    let mut sorted: Vec<&PatientRecord> = records.collect();
    sorted.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
    let mut out = Vec::new();
    for r in sorted {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    write_atomic(path, &out)?;
    Ok(())
}

/// Inputs of a new patient, before evaluation.
#[derive(Debug, Clone)]
pub struct NewPatient {
    pub id: String,
    pub label: String,
    pub arch: ArchState,
    pub plan: MovementPlan,
    pub crowding: Option<CrowdingMetadata>,
    pub provenance: Option<Provenance>,
}

impl PatientRecord {
    pub fn create(p: NewPatient, eval: &Evaluation, frames_ref: String, now: String) -> Self {
        let content_hash = content_hash(&p.arch, &p.plan, p.crowding.as_ref(), &eval.score, &eval.frames_json);
        Self {
            schema_version: SCHEMA_VERSION,
            id: p.id,
            label: p.label,
            version: 1,
            content_hash,
            created_at: now.clone(),
            updated_at: now,
            arch: p.arch,
            plan: p.plan,
            crowding: p.crowding,
            score: eval.score.clone(),
            staging: eval.summary.clone(),
            frames_ref,
            provenance: p.provenance,
        }
    }

    /// The next version with `plan` replaced.
    pub fn revised(&self, plan: MovementPlan, eval: &Evaluation, now: String) -> Self {
        Self {
            version: self.version + 1,
            content_hash: content_hash(&self.arch, &plan, self.crowding.as_ref(), &eval.score, &eval.frames_json),
            updated_at: now,
            plan,
            score: eval.score.clone(),
            staging: eval.summary.clone(),
            ..self.clone()
        }
    }
}
