//! JSON job files, expanded into the equivalent command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Deserialize;
use serde_json::Value;

use crate::args::Cli;
use crate::output::{io_error, CliError};

#[derive(Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum JobCommand {
    Simulate,
    Conventional,
    Analytic3,
    Analytic4,
    Grape,
    Top,
    Dante,
    Profile,
}

impl JobCommand {
    fn name(self) -> &'static str {
        match self {
            JobCommand::Simulate => "simulate",
            JobCommand::Conventional => "conventional",
            JobCommand::Analytic3 => "analytic3",
            JobCommand::Analytic4 => "analytic4",
            JobCommand::Grape => "grape",
            JobCommand::Top => "top",
            JobCommand::Dante => "dante",
            JobCommand::Profile => "profile",
        }
    }
}

/// Relative paths are resolved against the job file's directory.
#[derive(Deserialize, Debug)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct JobSpec {
    pub command: JobCommand,
    pub system_file: PathBuf,
    #[serde(default)]
    pub parameters: BTreeMap<String, Value>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// Parameters holding file paths.
const PATH_PARAMETERS: [&str; 2] = ["pulse", "init"];

impl JobSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut job: JobSpec = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        job.system_file = base.join(&job.system_file);
        job.output_dir = base.join(&job.output_dir);
        for key in PATH_PARAMETERS {
            if let Some(Value::String(p)) = job.parameters.get_mut(key) {
                *p = base.join(&*p).display().to_string();
            }
        }
        Ok(job)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !self.system_file.is_file() {
            return Err(CliError::Config(format!(
                "system file {} does not exist",
                self.system_file.display()
            )));
        }
        for key in PATH_PARAMETERS {
            if let Some(Value::String(p)) = self.parameters.get(key) {
                if !Path::new(p).is_file() {
                    return Err(CliError::Config(format!("{key} file {p} does not exist")));
                }
            }
        }
        for key in ["system", "out", "seed", "threads"] {
            if self.parameters.contains_key(key) {
                return Err(CliError::Config(format!(
                    "parameter \"{key}\" belongs in the job's top-level fields"
                )));
            }
        }
        Ok(())
    }

    pub fn to_argv(&self, threads: Option<usize>) -> Result<Vec<String>, CliError> {
        let mut argv = vec!["spinxfer".to_string()];
        if let Some(n) = threads {
            argv.push(format!("--threads={n}"));
        }
        argv.push(self.command.name().to_string());
        argv.push(format!("--system={}", self.system_file.display()));
        argv.push(format!("--out={}", self.output_dir.display()));
        argv.push(format!("--seed={}", self.seed));
        for (key, value) in &self.parameters {
            let flag = format!("--{}", key.replace('_', "-"));
            match value {
                Value::Bool(true) => argv.push(flag),
                Value::Bool(false) | Value::Null => {}
                Value::Number(n) => argv.push(format!("{flag}={n}")),
                Value::String(s) => argv.push(format!("{flag}={s}")),
                Value::Array(items) => {
                    let parts = items
                        .iter()
                        .map(|v| match v {
                            Value::String(s) => Ok(s.clone()),
                            Value::Number(n) => Ok(n.to_string()),
                            _ => Err(CliError::Config(format!("parameter \"{key}\": unsupported list item {v}"))),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    argv.push(format!("{flag}={}", parts.join(",")));
                }
                Value::Object(_) => {
                    return Err(CliError::Config(format!("parameter \"{key}\" may not be an object")))
                }
            }
        }
        Ok(argv)
    }
}

pub fn expand(path: &Path, threads: Option<usize>) -> Result<(Cli, Vec<String>), CliError> {
    let job = JobSpec::load(path)?;
    job.validate()?;
    let argv = job.to_argv(threads)?;
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((cli, argv))
}
