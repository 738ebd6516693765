use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::Serialize;
use wald_liability::Error;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
    Io { path: PathBuf, message: String },
    /// A property check failed; the report was still written.
    Violation(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: u8,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Violation(_) => 4,
            CliError::Core(e) => match e {
                Error::GridTooSmall(_)
                | Error::NoConvergence { .. }
                | Error::NonIntervalRegion(_)
                | Error::BisectionFailed(_)
                | Error::ConstructionFailed { .. }
                | Error::TruncationExceeded { .. } => 3,
                Error::InadmissibleTariff { .. }
                | Error::RecklessnessViolation { .. }
                | Error::NotOutcomeEquivalent(_) => 4,
                _ => 2,
            },
        }
    }

    /// Writes the error as one JSON line on standard error.
    pub fn report(&self) -> ExitCode {
        let code = self.exit_code();
        let (kind, message) = match self {
            CliError::Core(e) => (e.kind(), e.to_string()),
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Io { path, message } => ("io", format!("{}: {message}", path.display())),
            CliError::Violation(m) => ("property_violation", m.clone()),
        };
        let body = ErrorReport { error: kind, message, exit_code: code };
        eprintln!("{}", serde_json::to_string(&body).expect("error report serializes"));
        ExitCode::from(code)
    }
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Sends a report to `<out>/<name>` or to standard output.
pub fn emit(out: Option<&Path>, name: &str, body: &str) -> Result<(), CliError> {
    match out {
        None => {
            print!("{body}");
            Ok(())
        }
        Some(dir) => {
            let io = |e: std::io::Error| CliError::Io {
                path: dir.join(name),
                message: e.to_string(),
            };
            std::fs::create_dir_all(dir).map_err(io)?;
            std::fs::write(dir.join(name), body).map_err(io)
        }
    }
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}
