use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::config::RunConfig;
use super::pipeline::Inputs;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `io::Write` sink that only hashes.
struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn hash_with(f: impl FnOnce(&mut HashWriter) -> Result<()>) -> Result<String> {
    let mut w = HashWriter(Sha256::new());
    f(&mut w)?;
    Ok(w.0.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Hashes of the canonical serialization of every input, so that two
/// byte-different but equivalent files hash alike.
pub fn data_hashes(inputs: &Inputs) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    out.insert("sales".into(), hash_with(|w| inputs.ds.write_sales_to(w))?);
    out.insert("pos".into(), hash_with(|w| inputs.ds.write_pos_to(w))?);
    out.insert("issues".into(), hash_with(|w| inputs.ds.write_issues_to(w))?);
    let holidays: String = inputs.holidays.iter().map(|d| format!("{d}\n")).collect();
    out.insert("holidays".into(), sha256_hex(holidays.as_bytes()));
    out.insert("cost".into(), sha256_hex(serde_json::to_string(&inputs.cost)?.as_bytes()));
    if let Some(t) = &inputs.truth {
        out.insert(
            "groundtruth".into(),
            hash_with(|w| {
                for r in t.rows() {
                    serde_json::to_writer(&mut *w, r)?;
                }
                Ok(())
            })?,
        );
    }
    Ok(out)
}

/// What a run was computed from. Re-running with the embedded config on
/// data with the same hashes reproduces every report byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub cutoff: NaiveDate,
    pub data: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, cutoff: NaiveDate, inputs: &Inputs) -> Result<Self> {
        Ok(Manifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            config_sha256: sha256_hex(serde_json::to_string(cfg)?.as_bytes()),
            seed: cfg.model.gbt.seed,
            cutoff,
            data: data_hashes(inputs)?,
        })
    }

    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("manifest serializes")
                .as_bytes(),
        )
    }

    pub fn run_id(&self) -> String {
        format!("{}-{}", self.command, &self.hash()[..12])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Creates `out_dir/<run-id>/` and writes the manifest into it.
    pub fn create_run_dir(&self) -> Result<PathBuf> {
        let dir = self.config.out_dir.join(self.run_id());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_json(&dir.join(MANIFEST_FILE), self)?;
        Ok(dir)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
