use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub datasets: Vec<String>,
    pub seed: Option<u64>,
    pub build: String,
    pub output: String,
    pub threads: usize,
    pub timings: Vec<StageTiming>,
    /// Command-specific figures such as throughput or final losses.
    pub metrics: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, output: &Path) -> Self {
        Self {
            command: command.to_string(),
            config: None,
            datasets: Vec::new(),
            seed: None,
            build: env!("STCORR_BUILD").to_string(),
            output: output.display().to_string(),
            threads: rayon::current_num_threads(),
            timings: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    /// Runs `f` and records its wall-clock time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    pub fn path_for(dir: &Path, command: &str) -> PathBuf {
        dir.join(format!("{command}.manifest.json"))
    }

    /// Writes `<dir>/<command>.manifest.json`.
    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = Self::path_for(dir, &self.command);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
