//! Run manifests: one `key = value` record per artifact-producing command.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::CliError;

pub const VERSION: &str = env!("GEKC_VERSION");

pub struct RunManifest {
    command: String,
    seed: Option<u64>,
    config: BTreeMap<String, String>,
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, String)>,
    notes: Vec<(String, String)>,
    timings: Vec<(String, f64)>,
    started: Instant,
    started_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_owned(),
            seed: None,
            config: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn config(&mut self, resolved: &BTreeMap<String, String>) {
        self.config = resolved.clone();
    }

    /// Records an input file with its sha256.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let sha = gekc::kg_data::file_sha256(path)?;
        self.inputs.push((path.display().to_string(), sha));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        let sha = gekc::kg_data::file_sha256(path)?;
        self.outputs.push((path.display().to_string(), sha));
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_owned(), value.to_string()));
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.timings.push((phase.to_owned(), t0.elapsed().as_secs_f64()));
        out
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "command = {}", self.command).unwrap();
        writeln!(s, "version = {VERSION}").unwrap();
        if let Some(seed) = self.seed {
            writeln!(s, "seed = {seed}").unwrap();
        }
        for (k, v) in &self.config {
            writeln!(s, "config.{k} = {v}").unwrap();
        }
        for (p, h) in &self.inputs {
            writeln!(s, "input.{p} = {h}").unwrap();
        }
        for (p, h) in &self.outputs {
            writeln!(s, "output.{p} = {h}").unwrap();
        }
        for (k, v) in &self.notes {
            writeln!(s, "{k} = {v}").unwrap();
        }
        writeln!(s, "timing.started_unix = {}", self.started_unix).unwrap();
        for (k, v) in &self.timings {
            writeln!(s, "timing.{k}_seconds = {v:.6}").unwrap();
        }
        writeln!(s, "timing.wall_seconds = {:.6}", self.started.elapsed().as_secs_f64()).unwrap();
        s
    }

    /// Writes `manifest.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let p = dir.join("manifest.txt");
        std::fs::write(&p, self.render()).map_err(|e| {
            CliError::Core(gekc::Error::Io {
                path: p.clone(),
                source: e,
            })
        })?;
        Ok(p)
    }
}
