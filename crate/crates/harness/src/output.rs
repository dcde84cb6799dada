//! Writing a finished run to its output directory.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::report::{emit_convergence_table, ReportError};
use crate::suites::RunOutput;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Report(#[from] ReportError),
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, OutputError> {
    fs::write(&path, contents).map_err(|source| OutputError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes `report.json`, `summary.csv`, `convergence.csv` (when the run has a
/// series) and any suite-specific files. Returns the paths written.
pub fn write_run(dir: &Path, output: &RunOutput) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    let json = serde_json::to_string_pretty(&output.report).expect("report serializes") + "\n";
    written.push(write(dir.join("report.json"), &json)?);
    written.push(write(dir.join("summary.csv"), &output.report.summary_csv()?)?);
    if output.report.convergence.is_some() {
        written.push(write(dir.join("convergence.csv"), &emit_convergence_table(&output.report)?)?);
    }
    for (name, contents) in &output.files {
        written.push(write(dir.join(name), contents)?);
    }
    Ok(written)
}
