//! Output directory bookkeeping and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use qrotor::CorrelatorSeries;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Outcome of one scan point.
#[derive(Clone, Debug, Serialize)]
pub struct PointSummary {
    pub label: String,
    pub ok: bool,
    pub converged: bool,
    pub energy: Option<f64>,
    pub iterations: usize,
    pub max_bond: usize,
    pub truncation_error: f64,
    pub seconds: f64,
    pub error: Option<String>,
}

impl PointSummary {
    pub fn failed(label: impl Into<String>, err: &dyn std::fmt::Display, seconds: f64) -> Self {
        Self {
            label: label.into(),
            ok: false,
            converged: false,
            energy: None,
            iterations: 0,
            max_bond: 0,
            truncation_error: 0.0,
            seconds,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub kind: String,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub points: Vec<PointSummary>,
    pub artifacts: Vec<String>,
    pub seconds: f64,
    pub status: String,
}

/// Writes artifacts into the output directory and records each one.
pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<String>,
    started: Instant,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::Io(root.to_path_buf(), e))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&mut self, name: &str) -> PathBuf {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        self.root.join(name)
    }

    pub fn csv(&mut self, name: &str, series: &CorrelatorSeries) -> Result<(), CliError> {
        let p = self.path(name);
        series
            .save_csv(&p)
            .map_err(|e| CliError::Run(format!("writing {}: {e}", p.display())))
    }

    /// A CSV table with a header row.
    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let p = self.path(name);
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        std::fs::write(&p, text).map_err(|e| CliError::Io(p, e))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let p = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
        std::fs::write(&p, text).map_err(|e| CliError::Io(p, e))
    }

    /// Writes `manifest.json`; it lists itself along with every artifact.
    pub fn finish(
        mut self,
        config: &ExperimentConfig,
        points: Vec<PointSummary>,
        status: &str,
    ) -> Result<RunManifest, CliError> {
        let p = self.path("manifest.json");
        let manifest = RunManifest {
            kind: config.kind().name().to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            points,
            artifacts: self.artifacts.clone(),
            seconds: self.started.elapsed().as_secs_f64(),
            status: status.to_string(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Run(e.to_string()))?;
        std::fs::write(&p, text).map_err(|e| CliError::Io(p, e))?;
        Ok(manifest)
    }
}
