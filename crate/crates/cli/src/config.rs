//! Study directory layout and the persisted run configuration.
//!
//! A study lives in one directory: `config.json` records every knob the
//! pipeline stages consume, `dataset.jsonl` the filtered scenarios,
//! `plans/` the siting output consumed by later stages, and `reports/`
//! the tables meant for humans and plotting scripts. Reports embed a
//! digest of `config.json` so a table can always be traced back to the
//! exact configuration that produced it.

use flowctl_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

/// Dataset prefix sizes used when `generate` seeds a fresh config.
pub const DEFAULT_SPRIME: [usize; 3] = [5, 20, 50];

/// Scenarios steered per sweep unless overridden.
pub const DEFAULT_STEER_COUNT: usize = 50;

/// Largest scenario prefix or steering selection accepted without
/// `--allow-large`. Keeps accidental multi-hour runs behind an explicit
/// opt-in.
pub const DESK_SCALE_CAP: usize = 200;

/// Which pipeline stages have been run on a study directory.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Stages {
    pub generate: bool,
    pub sitesize: bool,
    pub steer: bool,
}

/// Report-producing stage, for scoping config hashes.
#[derive(Clone, Copy, Debug)]
pub enum Stage {
    Sitesize,
    Steer,
}

/// Everything a study run depends on, persisted as `config.json`.
///
/// Weights are stored as the tokens the user supplied (`"1e4"`, `"inf"`)
/// rather than floats so that an infinite sentinel survives the JSON
/// round trip unchanged.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Case file the dataset was generated from.
    pub case: PathBuf,
    /// Study directory the config was written into.
    pub out: PathBuf,
    pub seed: u64,
    /// Scenarios drawn before dispatch and realizability filtering.
    pub scenarios: usize,
    /// Dataset prefix sizes for siting.
    pub sprime: Vec<usize>,
    /// Fixed controller budget; `None` sweeps down for the minimum.
    pub k: Option<usize>,
    /// Tracking weights for steering, descending.
    pub w_grid: Vec<String>,
    /// Scenarios steered per sweep, spread evenly across the dataset.
    pub steer_count: usize,
    pub stages: Stages,
}

impl StudyConfig {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join("config.json")
    }

    pub fn load(dir: &Path) -> Result<StudyConfig> {
        let path = Self::path(dir);
        let bytes = std::fs::read(&path).map_err(|err| match err.kind() {
            ErrorKind::NotFound => Error::Io(std::io::Error::new(
                ErrorKind::NotFound,
                format!(
                    "no study config at {}; run `flowctl generate` first",
                    path.display()
                ),
            )),
            _ => Error::Io(err),
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::write(Self::path(dir), self.to_bytes()?)?;
        Ok(())
    }

    /// Hex digest over the knobs a stage's outputs depend on, truncated
    /// for report headers. Scoping per stage keeps a report's hash stable
    /// when an unrelated stage later updates its own knobs in the config;
    /// the directory name and stage toggles never contribute.
    pub fn hash(&self, stage: Stage) -> Result<String> {
        let knobs = match stage {
            Stage::Sitesize => serde_json::json!({
                "case": self.case,
                "seed": self.seed,
                "scenarios": self.scenarios,
                "sprime": self.sprime,
                "k": self.k,
            }),
            Stage::Steer => serde_json::json!({
                "case": self.case,
                "seed": self.seed,
                "scenarios": self.scenarios,
                "w_grid": self.w_grid,
                "steer_count": self.steer_count,
            }),
        };
        let digest = Sha256::digest(serde_json::to_vec(&knobs)?);
        let mut hex = String::with_capacity(16);
        for byte in &digest[..8] {
            hex.push_str(&format!("{byte:02x}"));
        }
        Ok(hex)
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

pub fn dataset_path(dir: &Path) -> PathBuf {
    dir.join("dataset.jsonl")
}

pub fn plans_dir(dir: &Path) -> PathBuf {
    dir.join("plans")
}

pub fn reports_dir(dir: &Path) -> PathBuf {
    dir.join("reports")
}

/// Parses one weight token; `inf` is the pin-to-prior sentinel.
pub fn parse_weight(token: &str) -> Result<f64> {
    let trimmed = token.trim();
    if trimmed.eq_ignore_ascii_case("inf") || trimmed.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    let w: f64 = trimmed
        .parse()
        .map_err(|_| Error::Usage(format!("invalid weight {trimmed:?} in --w-grid")))?;
    if !(w >= 0.0) {
        return Err(Error::Usage(format!(
            "weight {trimmed} must be nonnegative"
        )));
    }
    Ok(w)
}

/// Formats a weight the way `parse_weight` reads it back.
pub fn weight_token(w: f64) -> String {
    if w.is_infinite() {
        "inf".to_string()
    } else {
        format!("{w:e}")
    }
}
