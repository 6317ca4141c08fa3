use std::path::Path;

use anyhow::Context;
use labcast_core::io::{atomic_write, file_sha256, sha256_hex};
use serde::Serialize;
use serde_json::Value;

use crate::config::Resolved;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::metadata(path)
            .with_context(|| format!("reading {}", path.display()))?
            .len();
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
            bytes,
        })
    }

    fn of_bytes(path: &Path, data: &[u8]) -> Self {
        FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(data),
            bytes: data.len() as u64,
        }
    }
}

/// What produced an artifact: the command, its resolved configuration with
/// the source of each key, and digests of every input and output.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Resolved,
    pub config_sources: std::collections::BTreeMap<&'static str, crate::config::Source>,
    pub inputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<FileDigest>,
}

impl Provenance {
    pub fn new(command: &'static str, config: &Resolved, inputs: &[&Path]) -> anyhow::Result<Self> {
        Ok(Provenance {
            tool: "labcast",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: config.clone(),
            config_sources: config.sources.clone(),
            inputs: inputs.iter().map(|p| FileDigest::of(p)).collect::<anyhow::Result<_>>()?,
            outputs: Vec::new(),
        })
    }

    /// Writes an artifact atomically and records its digest.
    pub fn write(&mut self, path: &Path, data: &[u8]) -> anyhow::Result<()> {
        atomic_write(path, data)?;
        self.outputs.push(FileDigest::of_bytes(path, data));
        Ok(())
    }

    /// Writes `<primary>.manifest.json` next to the primary output.
    pub fn write_sidecar(&self, primary: &Path, details: Value) -> anyhow::Result<()> {
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        let body = serde_json::json!({ "provenance": self, "details": details });
        atomic_write(Path::new(&name), &to_pretty(&body))?;
        Ok(())
    }
}

pub fn to_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}
