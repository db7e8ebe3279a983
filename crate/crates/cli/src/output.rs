//! Output directory with a file index and the run manifest.

use anyhow::{Context, Result};
use cgolab::fourier::GridField;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub kind: &'static str,
    pub bytes: u64,
    pub description: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

/// Everything needed to rerun and audit a run. Written last, atomically.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_file: Option<String>,
    pub config: serde_json::Value,
    pub threads: usize,
    /// Wall times; the only non-reproducible part of a run's outputs.
    pub stages: &'a [Stage],
    pub files: &'a [FileEntry],
    pub passed: bool,
    pub summary: serde_json::Value,
}

pub struct Output {
    root: PathBuf,
    files: Vec<FileEntry>,
    stages: Vec<Stage>,
    clock: Instant,
}

impl Output {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Output {
            root: root.to_path_buf(),
            files: Vec::new(),
            stages: Vec::new(),
            clock: Instant::now(),
        })
    }

    /// Closes the current stage: records the time since the previous call.
    pub fn stage(&mut self, name: &str) {
        self.stages.push(Stage {
            name: name.into(),
            seconds: self.clock.elapsed().as_secs_f64(),
        });
        self.clock = Instant::now();
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Adds a file already written under the root to the index.
    pub fn index_existing(&mut self, name: &str, kind: &'static str, description: &str) -> Result<()> {
        let bytes = std::fs::metadata(self.root.join(name))?.len();
        self.files.push(FileEntry {
            path: name.into(),
            kind,
            bytes,
            description: description.into(),
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T, description: &str) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(self.root.join(name), text + "\n").with_context(|| format!("writing {name}"))?;
        self.index_existing(name, "json", description)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>], description: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(self.root.join(name)).with_context(|| format!("writing {name}"))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.index_existing(name, "csv", description)
    }

    pub fn grid(&mut self, name: &str, field: &GridField, description: &str) -> Result<()> {
        field.write_binary(&self.root.join(name)).with_context(|| format!("writing {name}"))?;
        self.index_existing(name, "cgof", description)
    }

    pub fn finish(
        mut self,
        command: &str,
        config_file: Option<&Path>,
        config: serde_json::Value,
        threads: usize,
        passed: bool,
        summary: serde_json::Value,
    ) -> Result<()> {
        self.stage("write");
        let manifest = RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_file: config_file.map(|p| p.display().to_string()),
            config,
            threads,
            stages: &self.stages,
            files: &self.files,
            passed,
            summary,
        };
        let tmp = self.root.join(".manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(&manifest)? + "\n")?;
        std::fs::rename(&tmp, self.root.join("manifest.json"))?;
        Ok(())
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}
