//! Run configuration files, manifests and output staging.
//!
//! Every subcommand's options can come from a JSON file whose keys are the
//! long flag names with `-` replaced by `_`. Flags given on the command line
//! override the file. A run manifest written by an earlier run is also
//! accepted as a config file; its recorded configuration is replayed.

use std::path::{Path, PathBuf};

use dmlfair::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Removes keys that mean "not given": nulls, empty lists and false flags.
fn prune(v: Value) -> Value {
    match v {
        Value::Object(map) => Value::Object(
            map.into_iter()
                .filter_map(|(k, v)| {
                    let v = prune(v);
                    match &v {
                        Value::Null | Value::Bool(false) => None,
                        Value::Array(a) if a.is_empty() => None,
                        _ => Some((k, v)),
                    }
                })
                .collect(),
        ),
        other => other,
    }
}

/// Config-file contents for `command`, unwrapping a manifest if given one.
fn read_config(path: &Path, command: &str) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("config {}: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(Error::Input(format!("config {} must be a JSON object", path.display())));
    };
    if map.get("tool").and_then(Value::as_str) == Some(TOOL) {
        let recorded = map.get("command").and_then(Value::as_str).unwrap_or_default();
        if recorded != command {
            return Err(Error::Input(format!(
                "manifest {} records a `{recorded}` run, not `{command}`",
                path.display()
            )));
        }
        return match map.remove("config") {
            Some(Value::Object(c)) => Ok(c),
            _ => Err(Error::Input(format!("manifest {} has no config", path.display()))),
        };
    }
    Ok(map)
}

/// Overlays command-line values on the config file and returns the merged
/// options together with their JSON form (recorded in the manifest).
pub fn resolve<T>(flags: &T, config: Option<&Path>, command: &str) -> Result<(T, Value)>
where
    T: Serialize + DeserializeOwned,
{
    let mut merged = match config {
        Some(p) => read_config(p, command)?,
        None => Map::new(),
    };
    if let Value::Object(given) = prune(serde_json::to_value(flags)?) {
        merged.extend(given);
    }
    let value = prune(Value::Object(merged));
    let opts = serde_json::from_value(value.clone())
        .map_err(|e| Error::Input(format!("bad configuration: {e}")))?;
    Ok((opts, value))
}

pub fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::Input(format!("missing required option --{flag}")))
}

pub const TOOL: &str = "dmlfair";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config: Value,
    #[serde(skip_serializing_if = "Value::is_null", default)]
    pub details: Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<FileRecord> {
    Ok(FileRecord {
        path: path.to_path_buf(),
        sha256: sha256_hex(&std::fs::read(path)?),
    })
}

/// Outputs collected in memory and written together at the end, so a run
/// that fails midway leaves no partial results behind.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, path: impl Into<PathBuf>, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(path, bytes);
        Ok(())
    }

    /// Writes every staged file atomically, then the manifest.
    pub fn commit(
        self,
        command: &str,
        config: Value,
        details: Value,
        inputs: &[&Path],
        manifest_path: &Path,
    ) -> Result<()> {
        let inputs = inputs.iter().map(|p| hash_file(p)).collect::<Result<Vec<_>>>()?;
        for (path, _) in &self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut outputs = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            dmlfair::io::write_atomic(path, bytes)?;
            outputs.push(FileRecord {
                path: path.clone(),
                sha256: sha256_hex(bytes),
            });
        }
        let manifest = Manifest {
            tool: TOOL.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            details,
            inputs,
            outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        dmlfair::io::write_atomic(manifest_path, &bytes)
    }
}

/// Default manifest location next to the primary output.
pub fn manifest_path(explicit: &Option<PathBuf>, primary: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut s = primary.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    })
}
