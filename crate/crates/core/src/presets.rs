//! The four bundled demo cases. They are built directly from fixed plans,
//! so serving one never runs an agent.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::benchmark::{
    case_from_plan, generate_scenario, Archetype, CrowdingSeverity, GeneratorConfig, ScenarioSpec, SyntheticCase,
};
use crate::dental::{FdiTooth, MovementPlan, ToothMovement};
use crate::error::{Error, Result};
use crate::scoring::{ContactOverlap, CrowdingMetadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetKey {
    Class1Crowding,
    OpenBite,
    Diastema,
    Class2Div1,
}

impl PresetKey {
    pub const ALL: [PresetKey; 4] =
        [PresetKey::Class1Crowding, PresetKey::OpenBite, PresetKey::Diastema, PresetKey::Class2Div1];

    pub fn key(self) -> &'static str {
        match self {
            PresetKey::Class1Crowding => "class1_crowding",
            PresetKey::OpenBite => "open_bite",
            PresetKey::Diastema => "diastema",
            PresetKey::Class2Div1 => "class2_div1",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PresetKey::Class1Crowding => "Class I crowding",
            PresetKey::OpenBite => "Anterior open bite",
            PresetKey::Diastema => "Maxillary diastema",
            PresetKey::Class2Div1 => "Class II division 1",
        }
    }
}

impl fmt::Display for PresetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for PresetKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PresetKey::ALL.into_iter().find(|k| k.key() == s).ok_or_else(|| Error::invalid(format!("unknown preset '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetCase {
    pub key: PresetKey,
    pub label: String,
    pub case: SyntheticCase,
}

fn tooth(code: u8) -> Result<FdiTooth> {
    FdiTooth::new(code)
}

fn plan(moves: &[(u8, [f64; 6])]) -> Result<MovementPlan> {
    MovementPlan::new(
        moves
            .iter()
            .map(|(code, m)| Ok((tooth(*code)?, ToothMovement::new(m[0], m[1], m[2], m[3], m[4], m[5]))))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Zero movement for every upper tooth not in `moves`.
fn full_arch_plan(moves: &[(u8, [f64; 6])]) -> Result<MovementPlan> {
    let mut p = plan(moves)?;
    for fdi in FdiTooth::all().filter(|t| t.quadrant() <= 2) {
        if p.get(fdi).is_none() {
            p.set(fdi, ToothMovement::default());
        }
    }
    Ok(p)
}

fn spec(archetype: Archetype, severity: CrowdingSeverity, seed: u64) -> ScenarioSpec {
    ScenarioSpec { archetype, severity, missing_count: 0, seed }
}

pub fn preset(key: PresetKey) -> Result<PresetCase> {
    let cfg = GeneratorConfig::default();
    let case = match key {
        PresetKey::Class1Crowding => {
            generate_scenario(&spec(Archetype::Ovoid, CrowdingSeverity::Moderate, 0x0C1A_5501), &cfg)?
        }
        PresetKey::OpenBite => {
            // incisors extrude past the 1.5 mm limit, canines follow partway
            let p = full_arch_plan(&[
                (12, [0.0, 0.3, -1.8, 2.0, 0.0, 0.0]),
                (11, [0.0, 0.2, -2.0, 3.0, 0.0, 0.0]),
                (21, [0.0, 0.2, -2.0, 3.0, 0.0, 0.0]),
                (22, [0.0, 0.3, -1.8, 2.0, 0.0, 0.0]),
                (13, [0.0, 0.0, -0.8, 0.0, 2.0, 0.0]),
                (23, [0.0, 0.0, -0.8, 0.0, -2.0, 0.0]),
            ])?;
            case_from_plan(
                spec(Archetype::Tapered, CrowdingSeverity::Mild, 0x0B17E),
                &[],
                p,
                CrowdingMetadata::default(),
                &cfg,
            )?
        }
        PresetKey::Diastema => {
            // closing a midline gap: centrals move toward each other, laterals follow
            let p = full_arch_plan(&[
                (11, [1.2, -0.2, 0.0, 0.0, 3.0, 0.0]),
                (21, [-1.2, -0.2, 0.0, 0.0, -3.0, 0.0]),
                (12, [0.6, 0.0, 0.0, 0.0, 0.0, 4.0]),
                (22, [-0.6, 0.0, 0.0, 0.0, 0.0, -4.0]),
            ])?;
            case_from_plan(
                spec(Archetype::Square, CrowdingSeverity::Mild, 0xD1A5),
                &[],
                p,
                CrowdingMetadata::default(),
                &cfg,
            )?
        }
        PresetKey::Class2Div1 => {
            // flared incisors retracted with lingual torque, all four first
            // and second molars distalised together
            let p = full_arch_plan(&[
                (12, [0.0, -1.5, 0.0, -6.0, 0.0, 0.0]),
                (11, [0.0, -2.0, 0.5, -8.0, 0.0, 0.0]),
                (21, [0.0, -2.0, 0.5, -8.0, 0.0, 0.0]),
                (22, [0.0, -1.5, 0.0, -6.0, 0.0, 0.0]),
                (16, [0.0, -1.6, 0.0, 0.0, 0.0, 0.0]),
                (17, [0.0, -1.6, 0.0, 0.0, 0.0, 0.0]),
                (26, [0.0, -1.6, 0.0, 0.0, 0.0, 0.0]),
                (27, [0.0, -1.6, 0.0, 0.0, 0.0, 0.0]),
            ])?;
            let crowding = CrowdingMetadata {
                contacts: vec![
                    ContactOverlap { mesial: tooth(11)?, distal: tooth(12)?, overlap_mm: 0.4 },
                    ContactOverlap { mesial: tooth(21)?, distal: tooth(22)?, overlap_mm: 0.4 },
                ],
            };
            case_from_plan(spec(Archetype::NarrowV, CrowdingSeverity::Mild, 0xC2D1), &[], p, crowding, &cfg)?
        }
    };
    Ok(PresetCase { key, label: key.label().to_string(), case })
}

pub fn all_presets() -> Result<Vec<PresetCase>> {
    PresetKey::ALL.into_iter().map(preset).collect()
}
