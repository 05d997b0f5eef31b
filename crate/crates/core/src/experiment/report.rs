//! Run summaries, pass/fail checks, and output directories.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// One named pass/fail comparison. Only `acceptance` checks decide the exit
/// status of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub acceptance: bool,
    pub passed: bool,
    /// `None` when the measurement is not a finite number.
    pub measured: Option<f64>,
    pub expected: String,
}

impl Check {
    pub fn acceptance(
        name: impl Into<String>,
        passed: bool,
        measured: f64,
        expected: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            acceptance: true,
            passed,
            measured: measured.is_finite().then_some(measured),
            expected: expected.into(),
        }
    }

    pub fn info(name: impl Into<String>, passed: bool, measured: f64, expected: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            acceptance: false,
            passed,
            measured: measured.is_finite().then_some(measured),
            expected: expected.into(),
        }
    }

    pub fn status(&self) -> &'static str {
        if self.passed {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub experiment: String,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    /// Raw files written next to the summary, relative to its directory.
    pub artifacts: Vec<String>,
    pub data: serde_json::Value,
}

impl RunSummary {
    pub fn new(experiment: &str, config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            config: config.clone(),
            checks: Vec::new(),
            artifacts: Vec::new(),
            data: serde_json::Value::Null,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    /// True iff every acceptance check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.acceptance).all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.acceptance && !c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Directory owned by one experiment; remembers every file written into it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    /// Records `relative` as an artifact and returns its full path, with
    /// parent directories created.
    pub fn register(&mut self, relative: &str) -> Result<PathBuf> {
        let path = self.path(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(relative.to_string());
        Ok(path)
    }

    /// Opens `relative` for writing, creating parent directories.
    pub fn file(&mut self, relative: &str) -> Result<BufWriter<File>> {
        let path = self.register(relative)?;
        Ok(BufWriter::new(File::create(path)?))
    }

    pub fn csv(&mut self, relative: &str) -> Result<csv::Writer<BufWriter<File>>> {
        Ok(csv::Writer::from_writer(self.file(relative)?))
    }

    pub fn text(&mut self, relative: &str, contents: &str) -> Result<()> {
        let mut f = self.file(relative)?;
        f.write_all(contents.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, relative: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.text(relative, &text)
    }

    /// Writes `summary.json` listing every file written so far.
    pub fn finish(self, mut summary: RunSummary) -> Result<RunSummary> {
        summary.artifacts = self.written.clone();
        let text = summary.to_json()?;
        fs::write(self.root.join(SUMMARY_FILE), text)?;
        Ok(summary)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub experiment: String,
    pub wall_clock_seconds: f64,
}

/// Wall-clock time lives beside the summary so that the summary itself is
/// reproducible.
pub fn write_timing(root: &Path, experiment: &str, seconds: f64) -> Result<()> {
    let t = Timing {
        experiment: experiment.to_string(),
        wall_clock_seconds: seconds,
    };
    fs::write(root.join(TIMING_FILE), serde_json::to_string_pretty(&t)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_round_trip_and_status() {
        let mut s = RunSummary::new("demo", &ExperimentConfig::default());
        s.push(Check::info("note", false, f64::NAN, "anything"));
        assert!(s.passed());
        s.push(Check::acceptance("residual", true, 1e-4, "<= 1e-3"));
        assert!(s.passed());
        s.push(Check::acceptance("table", false, 1.0, "<= 1e-6"));
        assert!(!s.passed());
        assert_eq!(s.failed_checks().count(), 1);
        let text = s.to_json().unwrap();
        assert!(text.contains("\"schema_version\": 1"));
        let back = RunSummary::from_json(&text).unwrap();
        assert_eq!(back.checks[2], s.checks[2]);
        assert_eq!(back.checks[0].measured, None);
    }

    #[test]
    fn output_dir_tracks_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(&dir.path().join("run")).unwrap();
        out.text("a/b.csv", "x\n1\n").unwrap();
        out.json("c.json", &[1, 2]).unwrap();
        let s = out.finish(RunSummary::new("demo", &ExperimentConfig::default())).unwrap();
        assert_eq!(s.artifacts, vec!["a/b.csv", "c.json"]);
        let text = fs::read_to_string(dir.path().join("run").join(SUMMARY_FILE)).unwrap();
        assert_eq!(RunSummary::from_json(&text).unwrap(), s);
        write_timing(&dir.path().join("run"), "demo", 1.5).unwrap();
        assert!(dir.path().join("run").join(TIMING_FILE).exists());
    }
}
