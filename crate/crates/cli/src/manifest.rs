use serde::Serialize;
use std::path::{Path, PathBuf};

/// Run record written atomically next to the primary output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub wall_time_s: f64,
    pub exit_status: i32,
}

impl RunManifest {
    pub fn new(config: serde_json::Value) -> Self {
        RunManifest {
            command: std::env::args().collect::<Vec<_>>().join(" "),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            exit_status: 0,
        }
    }

    /// Writes `<primary output>.manifest.json` via a temp file + rename.
    pub fn write_next_to(&self, primary_output: &Path) -> std::io::Result<()> {
        let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path: PathBuf = primary_output.with_file_name(name);
        let tmp = path.with_extension("tmp");
        let body = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, &path)
    }
}
