//! Run directories: every command that writes under `--out` records the
//! resolved config, input digests and outputs in `manifest.json`, written
//! last and atomically.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fashionrec_core::training::MetricLog;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io::{sha256_path, write_atomic, write_json};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const METRICS: &str = "metrics.csv";
pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub duration_secs: f64,
}

pub struct Run {
    dir: PathBuf,
    started: Instant,
    manifest: RunManifest,
}

impl Run {
    /// Creates `dir` and writes the resolved config.
    pub fn start(
        dir: &Path,
        command: &str,
        argv: &[String],
        seed: u64,
        config: &impl Serialize,
    ) -> Result<Run> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let config = serde_json::to_value(config).map_err(|e| Error::Internal(e.to_string()))?;
        write_json(&dir.join(CONFIG), &config)?;
        Ok(Run {
            dir: dir.to_path_buf(),
            started: Instant::now(),
            manifest: RunManifest {
                command: command.into(),
                argv: argv.to_vec(),
                version: env!("CARGO_PKG_VERSION").into(),
                seed,
                config,
                inputs: Vec::new(),
                outputs: vec![PathBuf::from(CONFIG)],
                duration_secs: 0.0,
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.manifest.inputs.push(InputDigest {
            role: role.into(),
            path: path.to_path_buf(),
            sha256: sha256_path(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, rel: impl Into<PathBuf>) {
        self.manifest.outputs.push(rel.into());
    }

    pub fn write_json(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        write_json(&self.path(rel), value)?;
        self.output(rel);
        Ok(())
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        write_atomic(&self.path(rel), text.as_bytes())?;
        self.output(rel);
        Ok(())
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        self.manifest.duration_secs = self.started.elapsed().as_secs_f64();
        write_json(&self.dir.join(MANIFEST), &self.manifest)?;
        Ok(self.manifest)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (epoch, split); empty cells for metrics a split does not have.
pub fn metrics_csv(log: &MetricLog) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Internal(e.to_string());
    w.write_record([
        "epoch",
        "split",
        "loss",
        "loss_sum",
        "accuracy",
        "auc",
        "fitb_accuracy",
    ])
    .map_err(csv_err)?;
    for r in log.rows() {
        w.write_record([
            r.epoch.to_string(),
            r.split.name().to_string(),
            r.loss.to_string(),
            r.loss_sum.to_string(),
            opt(r.accuracy),
            opt(r.auc),
            opt(r.fitb_accuracy),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}
