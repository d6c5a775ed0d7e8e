//! Output plumbing: atomic file writes and the reproducibility header that
//! every CSV report starts with.

use anyhow::{Context, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Write via a temp file in the same directory, then rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = match path.file_name() {
        Some(name) => path.with_file_name(format!("{}.tmp", name.to_string_lossy())),
        None => anyhow::bail!("output path {} has no file name", path.display()),
    };
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} -> {}", tmp.display(), path.display()))?;
    Ok(())
}

/// Config echo: sorted `# key = value` lines plus tool version and command.
pub struct ReportHeader {
    command: &'static str,
    entries: BTreeMap<String, String>,
}

impl ReportHeader {
    pub fn new(command: &'static str) -> Self {
        Self { command, entries: BTreeMap::new() }
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn set_path(&mut self, key: &str, value: &Path) -> &mut Self {
        self.entries.insert(key.to_string(), value.display().to_string());
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# pat {}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("# command = {}\n", self.command));
        for (k, v) in &self.entries {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out
    }
}
