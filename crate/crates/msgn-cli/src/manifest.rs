//! Run manifests.
//!
//! Every file-writing command drops a `manifest.json` next to its outputs:
//! the artifact version, the seed, the fully resolved configuration echoed
//! as config text, and the files written with their data row counts.
//! Feeding `config_echo` back to the same command reproduces the outputs
//! byte for byte; that round trip is the manifest's defining invariant.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub rows: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config_echo: String,
    pub outputs: Vec<OutputFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hx_side: Option<String>,
}

impl RunManifest {
    pub fn new(seed: u64, config_echo: String) -> RunManifest {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_echo,
            outputs: Vec::new(),
            termination: None,
            hx_side: None,
        }
    }

    pub fn record(&mut self, path: &str, rows: u64) {
        self.outputs.push(OutputFile {
            path: path.to_string(),
            rows,
        });
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let mut m = RunManifest::new(7, "grid.n = 64\n".into());
        m.record("series.csv", 42);
        m.termination = Some("reached_t_end".into());
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.seed, 7);
        assert_eq!(back.config_echo, "grid.n = 64\n");
        assert_eq!(back.outputs.len(), 1);
        assert_eq!(back.outputs[0].rows, 42);
        assert_eq!(back.termination.as_deref(), Some("reached_t_end"));
        assert_eq!(back.hx_side, None);
    }
}
