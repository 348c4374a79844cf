//! Output directories and exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;

use iakrec::Error;

/// Bad command line.
pub const USAGE: u8 = 2;
/// Missing or invalid configuration.
pub const CONFIG: u8 = 3;
/// A file could not be read or written.
pub const IO: u8 = 4;
/// An input file is malformed: dataset lines, checkpoints, requests.
pub const SCHEMA: u8 = 5;
/// A required input was not given, or the output directory is taken.
pub const PRECONDITION: u8 = 6;
/// Anything else, e.g. a dataset that does not fit the backbone.
pub const RUNTIME: u8 = 1;

/// A one-line diagnostic and the process exit code that goes with it.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: String) -> Self {
        Failure { code: CONFIG, message }
    }

    pub fn io(message: String) -> Self {
        Failure { code: IO, message }
    }

    pub fn precondition(message: String) -> Self {
        Failure {
            code: PRECONDITION,
            message,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => CONFIG,
            Error::Io { .. } => IO,
            Error::Parse { .. } | Error::Checkpoint(_) => SCHEMA,
            _ => RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// A fresh directory holding one command's outputs and the effective config.
pub struct OutputDir {
    path: PathBuf,
    workdir: PathBuf,
}

impl OutputDir {
    /// Creates `out` (resolved against `workdir`), or a new
    /// `runs/<time>-seed<seed>-<command>[-n]` directory when `out` is `None`.
    /// An existing non-empty directory is never reused.
    pub fn create(workdir: &Path, out: Option<&Path>, command: &str, seed: u64, config: &str) -> Result<Self, Failure> {
        let io = |p: &Path, e: std::io::Error| Failure::io(format!("{}: {e}", p.display()));
        let path = match out {
            Some(p) => {
                let p = if p.is_absolute() { p.to_path_buf() } else { workdir.join(p) };
                if p.exists() && fs::read_dir(&p).map_err(|e| io(&p, e))?.next().is_some() {
                    return Err(Failure::precondition(format!(
                        "output directory {} is not empty",
                        p.display()
                    )));
                }
                fs::create_dir_all(&p).map_err(|e| io(&p, e))?;
                p
            }
            None => {
                let runs = workdir.join("runs");
                fs::create_dir_all(&runs).map_err(|e| io(&runs, e))?;
                let stem = format!("{}-seed{seed}-{command}", Utc::now().format("%Y%m%dT%H%M%SZ"));
                // `create_dir` fails on an existing directory, so concurrent or
                // same-second runs each get their own suffix.
                let mut n = 0;
                loop {
                    let name = if n == 0 { stem.clone() } else { format!("{stem}-{n}") };
                    let p = runs.join(name);
                    match fs::create_dir(&p) {
                        Ok(()) => break p,
                        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
                        Err(e) => return Err(io(&p, e)),
                    }
                }
            }
        };
        let dir = OutputDir {
            path,
            workdir: workdir.to_path_buf(),
        };
        let cfg = dir.file("config.toml");
        fs::write(&cfg, config).map_err(|e| io(&cfg, e))?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Prints the directory on stdout, relative to the working directory when
    /// it lies inside it, so the next command can take it with the same
    /// `--workdir`.
    pub fn announce(&self) {
        println!("{}", self.path.strip_prefix(&self.workdir).unwrap_or(&self.path).display());
    }
}
