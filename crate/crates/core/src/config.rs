//! Run configuration: one TOML file with a section per component, plus
//! `section.key=value` overrides.
//!
//! ```toml
//! seed = 7
//!
//! [cascade.forest]
//! tree_count = 4
//! max_depth = 14
//!
//! [voting]
//! training_image_count = 2000
//! ```
//!
//! Missing keys take their defaults; unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::cascade::CascadeConfig;
use crate::data::icvl::IcvlConfig;
use crate::data::msra::MsraConfig;
use crate::data::synth::SynthConfig;
use crate::error::{Error, Result};
use crate::finger_detect::DetectConfig;
use crate::voting::VotingConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub synth: SynthConfig,
    pub detect: DetectConfig,
    pub cascade: CascadeConfig,
    pub voting: VotingConfig,
    pub msra: MsraConfig,
    pub icvl: IcvlConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.detect.validate()?;
        self.cascade.validate()?;
        self.voting.validate()?;
        self.msra.intrinsics.validate()?;
        self.icvl.intrinsics.validate()
    }

    /// Parses TOML text, applies overrides in order and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Config> {
        let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let known = Value::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&Value::Table(table), &known, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Config::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Applies `a.b.c=value`. The value is read as a TOML literal when it
/// parses as one, otherwise as a bare string.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => Value::String(raw.to_string()),
    };
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let slot = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = slot
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part} is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

fn unknown_keys(given: &Value, known: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Table(g), Value::Table(k)) = (given, known) else { return };
    for (key, v) in g {
        let full = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match k.get(key) {
            None => out.push(full),
            Some(kv) => unknown_keys(v, kv, &full, out),
        }
    }
}
