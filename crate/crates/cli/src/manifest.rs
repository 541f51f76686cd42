use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments after the program name.
    pub arguments: Vec<String>,
    /// Effective configuration after defaults and flag overrides.
    pub config: String,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub versions: BTreeMap<String, String>,
    /// Absolute input paths.
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digest_inputs(paths: &[PathBuf]) -> Result<Vec<FileDigest>, CliError> {
    paths
        .iter()
        .map(|p| {
            let abs = std::fs::canonicalize(p).map_err(|e| CliError::io(p, e))?;
            Ok(FileDigest {
                path: abs.display().to_string(),
                sha256: sha256_file(&abs)?,
            })
        })
        .collect()
}

pub fn digest_outputs(out: &Path, names: &[String]) -> Result<Vec<FileDigest>, CliError> {
    names
        .iter()
        .map(|n| {
            Ok(FileDigest {
                path: n.clone(),
                sha256: sha256_file(&out.join(n))?,
            })
        })
        .collect()
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("outbreak-cli".to_owned(), env!("CARGO_PKG_VERSION").to_owned()),
        ("manifest".to_owned(), "1".to_owned()),
    ])
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        let path = out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Validation(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Names of inputs whose current digest differs from the recorded one.
    pub fn changed_inputs(&self) -> Vec<String> {
        self.inputs
            .iter()
            .filter(|d| sha256_file(Path::new(&d.path)).map_or(true, |h| h != d.sha256))
            .map(|d| d.path.clone())
            .collect()
    }
}
