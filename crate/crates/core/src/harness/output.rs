//! CSV schemas, the JSON run manifest and its completeness check.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Every CSV the harness writes. The header is a function of `K` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    Trajectory,
    Fluid,
    Compare,
    CompareMedians,
    Gap,
    MartingaleRuns,
    MartingaleSummary,
    Sweep,
    AuxiliaryTail,
    AuxiliaryFit,
    Poisson,
    Verify,
}

impl Schema {
    pub fn header(self, k: usize) -> Vec<String> {
        let fixed = |cols: &[&str]| cols.iter().map(|c| c.to_string()).collect::<Vec<_>>();
        let per_state = |prefix: &'static str| (1..=k).map(move |s| format!("{prefix}_{s}"));
        match self {
            Schema::Trajectory => fixed(&["t", "event_index"])
                .into_iter()
                .chain(per_state("Y"))
                .chain(per_state("Ybar"))
                .collect(),
            Schema::Fluid => fixed(&["t"]).into_iter().chain(per_state("y")).collect(),
            Schema::Compare => fixed(&["N", "seed", "sup_distance"]),
            Schema::CompareMedians => fixed(&["N", "runs", "median_sup_distance"]),
            Schema::Gap => fixed(&["t", "event_index"])
                .into_iter()
                .chain((1..=k).flat_map(|m| (1..=k).map(move |l| format!("R_{m}_{l}"))))
                .collect(),
            Schema::MartingaleRuns => fixed(&["N", "seed"]).into_iter().chain(per_state("M")).collect(),
            Schema::MartingaleSummary => fixed(&[
                "N",
                "state",
                "runs",
                "second_moment",
                "std_err",
                "ci_upper",
                "ceiling",
            ]),
            Schema::Sweep => fixed(&["N", "epsilon", "runs", "exceed", "p_hat", "ci_low", "ci_high"]),
            Schema::AuxiliaryTail => fixed(&[
                "N",
                "epsilon",
                "trials",
                "hits",
                "p_hat",
                "ci_low",
                "ci_high",
                "bernstein_ceiling",
            ]),
            Schema::AuxiliaryFit => fixed(&["epsilon", "slope", "intercept", "r_squared"]),
            Schema::Poisson => fixed(&[
                "N",
                "alpha",
                "trials",
                "hits",
                "p_hat",
                "ci_low",
                "ci_high",
                "analytic",
                "within_ci",
            ]),
            Schema::Verify => fixed(&["check", "status", "detail"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub schema: Schema,
    pub num_states: usize,
    /// Data rows, header excluded.
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub run_seed: u64,
    pub events: usize,
    pub wall_time_s: f64,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if passed { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: detail.into(),
        }
    }

    pub fn skip(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Skip,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    CheckFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub status: RunStatus,
    pub runs: Vec<RunRecord>,
    pub files: Vec<FileRecord>,
    pub checks: Vec<CheckRecord>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            status: RunStatus::Complete,
            runs: Vec::new(),
            files: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == RunStatus::Complete
    }

    /// Sorts runs by `(N, seed)` and files by path, sets the status from the
    /// checks, and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<Self> {
        self.runs.sort_by_key(|r| (r.n, r.seed));
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        if self.checks.iter().any(|c| c.status == CheckStatus::Fail) {
            self.status = RunStatus::CheckFailed;
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).map_err(|e| Error::Serialization(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes a CSV under `dir` and returns its manifest record.
pub fn write_csv<I>(dir: &Path, name: &str, schema: Schema, k: usize, rows: I) -> Result<FileRecord>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let path = dir.join(name);
    let csv_err = |e: csv::Error| Error::Serialization(format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(&path).map_err(csv_err)?;
    writer.write_record(schema.header(k)).map_err(csv_err)?;
    let mut count = 0;
    for row in rows {
        writer.write_record(&row).map_err(csv_err)?;
        count += 1;
    }
    writer.flush().map_err(|e| Error::io(&path, e))?;
    Ok(FileRecord {
        path: PathBuf::from(name),
        schema,
        num_states: k,
        rows: count,
    })
}

/// Checks that every file the manifest lists exists, carries its schema's
/// header and has the recorded number of data rows. Returns one message per
/// problem; empty means complete.
pub fn check_manifest(dir: &Path, manifest: &RunManifest) -> Vec<String> {
    let mut problems = Vec::new();
    let listed: Vec<&PathBuf> = manifest.files.iter().map(|f| &f.path).collect();
    for run in &manifest.runs {
        for f in &run.files {
            if !listed.contains(&f) {
                problems.push(format!("run file {} is not in the file list", f.display()));
            }
        }
    }
    for file in &manifest.files {
        let path = dir.join(&file.path);
        let mut reader = match csv::Reader::from_path(&path) {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let expected = file.schema.header(file.num_states);
        match reader.headers() {
            Ok(h) if h.iter().eq(expected.iter().map(String::as_str)) => {}
            Ok(h) => problems.push(format!(
                "{}: header {:?} does not match schema {:?}",
                path.display(),
                h.iter().collect::<Vec<_>>(),
                expected
            )),
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
        let rows = reader.records().count();
        if rows != file.rows {
            problems.push(format!(
                "{}: {rows} data rows, manifest says {}",
                path.display(),
                file.rows
            ));
        }
    }
    problems
}

/// Shortest round-trip decimal, so identical runs give identical bytes.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers() {
        assert_eq!(
            Schema::Trajectory.header(2).join(","),
            "t,event_index,Y_1,Y_2,Ybar_1,Ybar_2"
        );
        assert_eq!(Schema::Fluid.header(3).join(","), "t,y_1,y_2,y_3");
        assert_eq!(Schema::Gap.header(2).join(","), "t,event_index,R_1_1,R_1_2,R_2_1,R_2_2");
    }

    #[test]
    fn manifest_check_catches_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_csv(
            dir.path(),
            "fluid.csv",
            Schema::Fluid,
            2,
            (0..3).map(|i| vec![fmt_f64(i as f64), "0.5".into(), "0.5".into()]),
        )
        .unwrap();
        assert_eq!(rec.rows, 3);
        let mut m = RunManifest::new("fluid", "abc".into());
        m.files.push(rec);
        let m = m.finish(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
        assert!(check_manifest(dir.path(), &m).is_empty());

        let mut wrong_rows = m.clone();
        wrong_rows.files[0].rows = 4;
        assert_eq!(check_manifest(dir.path(), &wrong_rows).len(), 1);

        fs::write(dir.path().join("fluid.csv"), "t,y_1\n0,1\n").unwrap();
        let problems = check_manifest(dir.path(), &m);
        assert!(problems.iter().any(|p| p.contains("header")));

        fs::remove_file(dir.path().join("fluid.csv")).unwrap();
        assert!(!check_manifest(dir.path(), &m).is_empty());
    }

    #[test]
    fn failed_check_sets_status() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("verify", "x".into());
        m.checks.push(CheckRecord::new("a", true, ""));
        m.checks.push(CheckRecord::skip("b", ""));
        assert!(m.clone().finish(dir.path()).unwrap().passed());
        m.checks.push(CheckRecord::new("c", false, ""));
        assert_eq!(m.finish(dir.path()).unwrap().status, RunStatus::CheckFailed);
    }
}
