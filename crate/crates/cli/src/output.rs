//! Exit codes, CSV formatting, config expansion and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use cantor_core::tree::ValidationReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Command;

/// A failed run: exit 1 for I/O, 2 for invalid input, 3 for numeric diagnostics.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
    pub report: Option<ValidationReport>,
}

impl Failure {
    pub fn io(error: anyhow::Error) -> Self {
        Failure {
            code: 1,
            error,
            report: None,
        }
    }

    pub fn validation(error: anyhow::Error) -> Self {
        Failure {
            code: 2,
            error,
            report: None,
        }
    }

    pub fn numeric(error: anyhow::Error) -> Self {
        Failure {
            code: 3,
            error,
            report: None,
        }
    }

    pub fn invalid_tree(report: ValidationReport) -> Self {
        Failure {
            code: 2,
            error: anyhow!("tree failed validation"),
            report: Some(report),
        }
    }

    pub fn report(self) -> ExitCode {
        eprintln!("error: {:#}", self.error);
        if let Some(r) = &self.report {
            eprintln!(
                "{}",
                serde_json::to_string_pretty(r).expect("reports serialize")
            );
        }
        ExitCode::from(self.code)
    }
}

impl From<cantor_core::Error> for Failure {
    fn from(e: cantor_core::Error) -> Self {
        use cantor_core::Error as E;
        let code = match &e {
            E::Io(_) => 1,
            E::Divergent { .. } | E::ZeroMeasure(_) | E::NotSymmetric(_) => 3,
            E::InvalidParameter(_)
            | E::MalformedTree(_)
            | E::InvalidMetric(_)
            | E::SingletonPrefix
            | E::Unsupported(_)
            | E::Json(_)
            | E::Csv(_) => 2,
        };
        Failure {
            code,
            error: e.into(),
            report: None,
        }
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// 17 significant digits, enough to round-trip every f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header plus rows, comma separated, newline terminated.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn json<T: Serialize>(value: &T) -> Outcome<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::io(e.into()))?;
    s.push('\n');
    Ok(s)
}

/// Turns a config object into argv: `"command"` gives the subcommand words,
/// every other key becomes `--key` (underscores read as hyphens). `true` is a
/// bare flag, `false` and null are dropped, arrays repeat the flag.
pub fn config_argv(path: &Path) -> Outcome<Vec<String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(Failure::io)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))
        .map_err(Failure::validation)?;
    let serde_json::Value::Object(map) = value else {
        return Err(Failure::validation(anyhow!("config must be a JSON object")));
    };
    let command = map
        .get("command")
        .and_then(|c| c.as_str())
        .ok_or_else(|| Failure::validation(anyhow!("config needs a string \"command\"")))?;
    let mut argv: Vec<String> = command.split_whitespace().map(String::from).collect();
    for (key, value) in &map {
        if key == "command" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let items = match value {
            serde_json::Value::Array(xs) => xs.clone(),
            other => vec![other.clone()],
        };
        for item in items {
            match item {
                serde_json::Value::Bool(true) => argv.push(flag.clone()),
                serde_json::Value::Bool(false) | serde_json::Value::Null => {}
                serde_json::Value::String(s) => {
                    argv.push(flag.clone());
                    argv.push(s);
                }
                serde_json::Value::Number(n) => {
                    argv.push(flag.clone());
                    argv.push(n.to_string());
                }
                serde_json::Value::Array(_) | serde_json::Value::Object(_) => {
                    return Err(Failure::validation(anyhow!(
                        "config key {key}: nested values are not flags"
                    )));
                }
            }
        }
    }
    Ok(argv)
}

/// One file produced by a job.
pub struct Artifact {
    pub path: Option<PathBuf>,
    pub contents: String,
}

/// What a job hands back for writing.
pub struct JobOutput {
    pub artifacts: Vec<Artifact>,
    pub tree_hash: Option<String>,
    pub seed: Option<u64>,
    /// resolved parameters (e.g. the value behind `s0`)
    pub params: serde_json::Value,
    /// a problem found after the data were produced; reported once they are written
    pub diagnostic: Option<Failure>,
}

impl JobOutput {
    pub fn single(path: Option<PathBuf>, contents: String) -> Self {
        JobOutput {
            artifacts: vec![Artifact { path, contents }],
            tree_hash: None,
            seed: None,
            params: serde_json::Value::Null,
            diagnostic: None,
        }
    }

    pub fn tree_hash(mut self, hash: String) -> Self {
        self.tree_hash = Some(hash);
        self
    }

    pub fn params(mut self, params: serde_json::Value) -> Self {
        self.params = params;
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub job: Command,
    pub tree_hash: Option<String>,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes every artifact (stdout for a missing path) and returns their hashes.
pub fn write_artifacts(artifacts: &[Artifact]) -> Outcome<Vec<OutputRecord>> {
    let mut records = Vec::new();
    for a in artifacts {
        match &a.path {
            Some(p) => {
                fs::write(p, &a.contents)
                    .with_context(|| format!("writing {}", p.display()))
                    .map_err(Failure::io)?;
                records.push(OutputRecord {
                    path: p.clone(),
                    sha256: sha256_hex(a.contents.as_bytes()),
                });
            }
            None => print!("{}", a.contents),
        }
    }
    Ok(records)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Outcome<()> {
    fs::write(path, json(manifest)?)
        .with_context(|| format!("writing manifest {}", path.display()))
        .map_err(Failure::io)
}

pub fn read_manifest(path: &Path) -> Outcome<Manifest> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading manifest {}", path.display()))
        .map_err(Failure::io)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing manifest {}", path.display()))
        .map_err(Failure::validation)
}
