use std::fs::{self, OpenOptions};
use std::io::Write;

use orthoplan_core::config::Config;
use orthoplan_core::dental::{FdiTooth, ToothMovement};
use orthoplan_core::presets::{preset, PresetKey};
use orthoplan_service::pipeline::Pipeline;
use orthoplan_service::store::{NewPatient, PatientRecord, Store, StoreError};

fn pipeline() -> Pipeline {
    Pipeline::new(&Config::default()).unwrap()
}

fn record(p: &Pipeline, id: &str, key: PresetKey) -> (PatientRecord, Vec<u8>) {
    let case = preset(key).unwrap().case;
    let eval = p.evaluate(&case.ground_truth, &case.target_plan, None).unwrap();
    let draft = NewPatient {
        id: id.into(),
        label: id.into(),
        arch: case.ground_truth,
        plan: case.target_plan,
        crowding: None,
        provenance: None,
    };
    let rec = PatientRecord::create(draft, &eval, format!("/api/patients/{id}/frames"), "2026-01-01T00:00:00Z".into());
    (rec, eval.frames_json)
}

fn revise(p: &Pipeline, rec: &PatientRecord, rz: f64) -> (PatientRecord, Vec<u8>) {
    let mut plan = rec.plan.clone();
    plan.set(FdiTooth::new(12).unwrap(), ToothMovement::new(0.0, 0.0, 0.0, 0.0, 0.0, rz));
    let eval = p.evaluate(&rec.arch, &plan, rec.crowding.as_ref()).unwrap();
    (rec.revised(plan, &eval, "2026-01-02T00:00:00Z".into()), eval.frames_json)
}

fn log_lines(dir: &std::path::Path) -> usize {
    fs::read_to_string(dir.join("patients.jsonl")).unwrap().lines().count()
}

#[test]
fn records_and_frames_survive_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline();
    let (a, fa) = record(&p, "a", PresetKey::Diastema);
    let (b, fb) = record(&p, "b", PresetKey::OpenBite);
    {
        let store = Store::open(dir.path()).unwrap();
        store.insert(a.clone(), &fa).unwrap();
        store.insert(b.clone(), &fb).unwrap();
        assert!(matches!(store.insert(a.clone(), &fa), Err(StoreError::Duplicate(_))));
    }
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.len(), 2);
    assert_eq!(*store.get("a").unwrap(), a);
    assert_eq!(*store.get("b").unwrap(), b);
    assert_eq!(*store.frames(&b.content_hash).unwrap().unwrap(), fb);
    assert!(store.frames("0000").unwrap().is_none());
}

#[test]
fn updates_are_versioned_and_compacted() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline();
    let (a, fa) = record(&p, "a", PresetKey::Class2Div1);
    let (a2, fa2) = revise(&p, &a, 4.0);
    {
        let store = Store::open(dir.path()).unwrap();
        store.insert(a.clone(), &fa).unwrap();
        store.update(a2.clone(), 1, &fa2).unwrap();
        let (stale, fs) = revise(&p, &a, 6.0);
        match store.update(stale, 1, &fs) {
            Err(StoreError::Conflict { expected: 1, current: 2, .. }) => {}
            other => panic!("expected conflict, got {other:?}"),
        }
    }
    assert_eq!(log_lines(dir.path()), 2);
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(log_lines(dir.path()), 1);
    let got = store.get("a").unwrap();
    assert_eq!(got.version, 2);
    assert_eq!(*got, a2);
    // frames of both versions stay addressable by hash
    assert_eq!(*store.frames(&a.content_hash).unwrap().unwrap(), fa);
    assert_eq!(*store.frames(&a2.content_hash).unwrap().unwrap(), fa2);
}

#[test]
fn torn_final_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline();
    let (a, fa) = record(&p, "a", PresetKey::Diastema);
    Store::open(dir.path()).unwrap().insert(a.clone(), &fa).unwrap();
    let mut f = OpenOptions::new().append(true).open(dir.path().join("patients.jsonl")).unwrap();
    f.write_all(br#"{"schema_version":1,"id":"b","lab"#).unwrap();
    drop(f);
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.len(), 1);
    assert_eq!(*store.get("a").unwrap(), a);
    assert_eq!(log_lines(dir.path()), 1);
}

#[test]
fn corruption_mid_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline();
    let (a, fa) = record(&p, "a", PresetKey::Diastema);
    let (b, fb) = record(&p, "b", PresetKey::OpenBite);
    {
        let store = Store::open(dir.path()).unwrap();
        store.insert(a, &fa).unwrap();
        store.insert(b, &fb).unwrap();
    }
    let path = dir.path().join("patients.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, format!("garbage\n{text}")).unwrap();
    match Store::open(dir.path()) {
        Err(StoreError::Corrupt { line: 1, .. }) => {}
        Err(other) => panic!("expected corruption, got {other:?}"),
        Ok(_) => panic!("expected corruption, store opened"),
    }
}

#[test]
fn in_memory_store_keeps_frames() {
    let p = pipeline();
    let (a, fa) = record(&p, "a", PresetKey::Diastema);
    let store = Store::in_memory();
    assert!(store.is_empty());
    store.insert(a.clone(), &fa).unwrap();
    assert_eq!(*store.frames(&a.content_hash).unwrap().unwrap(), fa);
    assert!(matches!(store.update(revise(&p, &a, 3.0).0, 1, &fa).map(|r| r.version), Ok(2)));
    assert!(matches!(store.update(a, 1, &fa), Err(StoreError::Conflict { .. })));
}
