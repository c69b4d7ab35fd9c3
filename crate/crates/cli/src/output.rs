use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, inputs or physics parameters; exit 2.
    Config(String),
    /// Exit 4.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<spinxfer::Error> for CliError {
    fn from(e: spinxfer::Error) -> Self {
        match e {
            spinxfer::Error::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub fn io_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub enum Outcome {
    Success,
    /// Artifacts were written but the optimization missed its target.
    NotConverged(String),
}

/// Output directory that remembers every file written to it.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
    inputs: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            inputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| io_error(&p, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        s.push('\n');
        self.text(name, &s)
    }

    /// Record a file written by a library routine.
    pub fn written(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn finish(
        mut self,
        command: &str,
        arguments: &[String],
        seed: Option<u64>,
        started: Instant,
        outcome: &Outcome,
        summary: Value,
    ) -> Result<(), CliError> {
        let status = match outcome {
            Outcome::Success => "ok",
            Outcome::NotConverged(_) => "not_converged",
        };
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            arguments,
            seed,
            threads: rayon::current_num_threads(),
            inputs: &self.inputs,
            outputs: &self.files,
            status,
            wall_time_s: started.elapsed().as_secs_f64(),
            summary,
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        s.push('\n');
        let p = self.path("manifest.json");
        std::fs::write(&p, s).map_err(|e| io_error(&p, e))?;
        self.files.clear();
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    arguments: &'a [String],
    seed: Option<u64>,
    threads: usize,
    inputs: &'a [String],
    /// Files in the output directory, excluding the manifest itself.
    outputs: &'a [String],
    status: &'a str,
    wall_time_s: f64,
    summary: Value,
}
