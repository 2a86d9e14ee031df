//! Per-run manifest recording everything needed to reproduce a CLI run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<String>,
    pub seed: u64,
    pub output_dir: String,
    pub tool_version: String,
    pub scenario_hash: Option<String>,
    /// Remaining flags, by name.
    pub parameters: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, output_dir: &Path) -> Self {
        RunManifest {
            subcommand: subcommand.to_owned(),
            config_path: None,
            seed,
            output_dir: output_dir.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            scenario_hash: None,
            parameters: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.insert(key.to_owned(), value.to_string());
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }
}
