use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Provenance recorded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Option<String>,
    pub inputs: Vec<String>,
    pub output_dir: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    body: &'a T,
}

pub struct OutDir {
    root: PathBuf,
    manifest: RunManifest,
}

impl OutDir {
    pub fn create(root: &Path, manifest: RunManifest) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            manifest,
        })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    /// JSON object with a leading `manifest` key followed by the body's fields.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(&WithManifest {
            manifest: &self.manifest,
            body,
        })
        .map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Text file whose first line is `# manifest {json}`; `fill` writes the rest.
    pub fn commented<F>(&self, name: &str, fill: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    {
        let header = serde_json::to_string(&self.manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        let mut buf = format!("# manifest {header}\n").into_bytes();
        fill(&mut buf)?;
        self.write(name, &buf)
    }
}

/// File-system-safe form of a component id: `EBED(wdeg)` -> `EBED_wdeg`.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .filter(|c| *c != ')')
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}
