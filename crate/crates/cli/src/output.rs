//! Artifact writing. Every file goes through [`Output`] so the manifest can
//! list it with its digest.

use std::path::{Path, PathBuf};

use iir::table::Table;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub model: String,
    pub seed: u64,
    pub config_sha256: String,
    pub outputs: Vec<FileEntry>,
}

pub struct Output {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl Output {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Numerical(format!("cannot serialise {rel}: {e}")))?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn write_table(&mut self, rel: &str, table: &Table) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Numerical(format!("cannot format {rel}: {e}"));
        w.write_record(&table.headers).map_err(fail)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Numerical(format!("cannot format {rel}: {e}")))?;
        self.write_bytes(rel, &bytes)
    }

    /// Record files written by a nested run under `prefix`.
    pub fn absorb(&mut self, prefix: &str, other: Output) {
        for f in other.files {
            self.files.push(FileEntry {
                path: format!("{prefix}/{}", f.path),
                sha256: f.sha256,
            });
        }
    }

    /// Write `manifest.json` listing everything written so far, sorted by path.
    pub fn finish(mut self, command: &str, model: &str, seed: u64, config_sha256: String) -> Result<Self, CliError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool: "iir",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            model: model.into(),
            seed,
            config_sha256,
            outputs: self.files.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Numerical(format!("cannot serialise manifest: {e}")))?;
        text.push('\n');
        std::fs::write(self.root.join("manifest.json"), text)?;
        Ok(self)
    }
}

/// File-name friendly form of a coordinate label.
pub fn slug(label: &str) -> String {
    let mut s = String::new();
    for c in label.chars() {
        match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '-' | '_' => s.push(c),
            '*' => s.push('x'),
            '/' => s.push_str("_over_"),
            '^' => s.push('p'),
            '.' => s.push('d'),
            _ => {}
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("T1/sqrt(T2*R)"), "T1_over_sqrtT2xR");
        assert_eq!(slug("n*p"), "nxp");
        assert_eq!(slug("T1^0.5"), "T1p0d5");
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
