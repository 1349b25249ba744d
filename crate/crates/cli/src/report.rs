use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::PipelineConfig;

pub const SCHEMA_VERSION: &str = "1";

/// Envelope of every JSON report. `generated_at` is the only field that
/// changes between identical runs.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema_version: &'static str,
    command: &'a str,
    generated_at: String,
    seed: u64,
    config: &'a PipelineConfig,
    artifacts: &'a [String],
    result: &'a T,
}

/// Collects the files written by one subcommand.
pub struct Output {
    dir: PathBuf,
    command: &'static str,
    artifacts: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path, command: &'static str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            artifacts: Vec::new(),
        })
    }

    /// Writes serializable rows as a CSV artifact.
    pub fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.artifacts.push(name.to_owned());
        Ok(())
    }

    /// Writes an artifact through a caller-supplied writer.
    pub fn raw(&mut self, name: &str, write: impl FnOnce(BufWriter<File>) -> epitail_core::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        write(BufWriter::new(file))?;
        self.artifacts.push(name.to_owned());
        Ok(())
    }

    /// Writes a standalone JSON artifact (e.g. a model file).
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(name.to_owned());
        Ok(())
    }

    /// Writes `<command>.json` and returns its path.
    pub fn finish<T: Serialize>(self, config: &PipelineConfig, result: &T) -> Result<PathBuf> {
        let report = Report {
            schema_version: SCHEMA_VERSION,
            command: self.command,
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            seed: config.seed(),
            config,
            artifacts: &self.artifacts,
            result,
        };
        let path = self.dir.join(format!("{}.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
