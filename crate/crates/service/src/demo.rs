//! Preset cases, evaluated once at startup and served as stored bytes.

use std::collections::BTreeMap;

use orthoplan_core::presets::{all_presets, PresetKey};
use orthoplan_core::Result;
use serde::Serialize;

use crate::pipeline::Pipeline;
use crate::store::{NewPatient, PatientRecord};

pub struct DemoCase {
    pub record: PatientRecord,
    pub record_json: Vec<u8>,
    pub frames_json: Vec<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PresetEntry {
    pub key: PresetKey,
    pub label: String,
    pub record_ref: String,
    pub frames_ref: String,
}

pub struct Demos(BTreeMap<PresetKey, DemoCase>);

pub fn frames_ref(key: PresetKey) -> String {
    format!("/api/demo/frames?case={key}")
}

impl Demos {
    pub fn build(pipeline: &Pipeline, now: &str) -> Result<Self> {
        let mut out = BTreeMap::new();
        for preset in all_presets()? {
            let case = preset.case;
            let crowding = (!case.crowding.contacts.is_empty()).then_some(case.crowding);
            let eval = pipeline.evaluate(&case.ground_truth, &case.target_plan, crowding.as_ref())?;
            let draft = NewPatient {
                id: format!("demo-{}", preset.key),
                label: preset.label,
                arch: case.ground_truth,
                plan: case.target_plan,
                crowding,
                provenance: None,
            };
            let record = PatientRecord::create(draft, &eval, frames_ref(preset.key), now.to_string());
            let record_json = serde_json::to_vec(&record)?;
            out.insert(preset.key, DemoCase { record, record_json, frames_json: eval.frames_json });
        }
        Ok(Self(out))
    }

    pub fn get(&self, key: PresetKey) -> Option<&DemoCase> {
        self.0.get(&key)
    }

    pub fn entries(&self) -> Vec<PresetEntry> {
        self.0
            .iter()
            .map(|(key, case)| PresetEntry {
                key: *key,
                label: case.record.label.clone(),
                record_ref: format!("/api/demo?case={key}"),
                frames_ref: frames_ref(*key),
            })
            .collect()
    }
}
