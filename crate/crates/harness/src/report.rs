//! Report records and the append-only writers for `records.jsonl` and
//! `summary.csv`.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const REPORT_FORMAT: &str = "mlab-report/1";

/// Label attached to every threshold decision.
pub const POLICY_NOTE: &str = "thresholds are artifact policy; no constants are derived from theory";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub max: f64,
    pub median: f64,
    pub min: f64,
}

impl Stats {
    /// `None` for an empty slice. NaNs sort last.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        let median = if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) };
        Some(Self {
            max: v[v.len() - 1],
            median,
            min: v[0],
        })
    }
}

/// Ratios of every family member at one dilation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub t: u32,
    pub ratios: Vec<f64>,
    pub stats: Stats,
}

/// Pass/fail decision: `value <= threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub format: String,
    pub experiment: String,
    pub id: String,
    pub config_hash: String,
    pub symbol: String,
    /// One ratio per family member at the first dilation step.
    pub ratios: Vec<f64>,
    pub stats: Option<Stats>,
    pub sweep: Vec<SweepEntry>,
    /// Secondary sweeps, e.g. the difference ratios of the estimates.
    #[serde(default)]
    pub aux_sweeps: Vec<AuxSweep>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub policy: String,
    /// Wall-clock seconds; the only nondeterministic field.
    pub runtime_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxSweep {
    pub name: String,
    pub sweep: Vec<SweepEntry>,
}

impl ReportRecord {
    pub fn new(experiment: &str, id: &str, config_hash: &str, symbol: &str) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            experiment: experiment.into(),
            id: id.into(),
            config_hash: config_hash.into(),
            symbol: symbol.into(),
            ratios: Vec::new(),
            stats: None,
            sweep: Vec::new(),
            aux_sweeps: Vec::new(),
            checks: Vec::new(),
            passed: true,
            policy: POLICY_NOTE.into(),
            runtime_s: 0.0,
        }
    }

    pub fn push_check(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    /// The record with the runtime zeroed, for determinism comparisons.
    pub fn payload(&self) -> ReportRecord {
        ReportRecord {
            runtime_s: 0.0,
            ..self.clone()
        }
    }
}

/// Builds a sweep table from `per_member[i][step]`.
pub fn sweep_table(steps: &[u32], per_member: &[Vec<f64>]) -> Vec<SweepEntry> {
    steps
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let ratios: Vec<f64> = per_member.iter().map(|r| r[k]).collect();
            let stats = Stats::of(&ratios).expect("family is non-empty");
            SweepEntry { t, ratios, stats }
        })
        .collect()
}

/// `max_i max_t R_i(t) / min_t R_i(t)`.
pub fn invariance_spread(per_member: &[Vec<f64>]) -> f64 {
    per_member
        .iter()
        .map(|r| {
            let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            hi / lo
        })
        .fold(1.0, f64::max)
}

/// `max_i max_t R_i(t) / R_i(t_first)`; members with `R_i ≡ 0` count as 1.
pub fn oscillation_growth(per_member: &[Vec<f64>]) -> f64 {
    per_member
        .iter()
        .map(|r| {
            let hi = r.iter().copied().fold(0.0, f64::max);
            if hi == 0.0 {
                1.0
            } else {
                hi / r[0]
            }
        })
        .fold(1.0, f64::max)
}

/// Single appender for one experiment directory.
pub struct ReportWriter {
    dir: PathBuf,
}

impl ReportWriter {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn records_path(&self) -> PathBuf {
        self.dir.join("records.jsonl")
    }

    pub fn summary_path(&self) -> PathBuf {
        self.dir.join("summary.csv")
    }

    /// Appends the record as one JSON line and one CSV row per family member.
    pub fn append(&self, record: &ReportRecord) -> Result<()> {
        let mut jsonl = OpenOptions::new().create(true).append(true).open(self.records_path())?;
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        jsonl.write_all(&line)?;

        let path = self.summary_path();
        let fresh = fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            csv.write_record(["experiment", "id", "config_hash", "member", "ratio", "sweep_max", "passed"])?;
        }
        for (i, ratio) in record.ratios.iter().enumerate() {
            let sweep_max = record
                .sweep
                .iter()
                .map(|e| e.ratios[i])
                .fold(f64::NEG_INFINITY, f64::max);
            csv.write_record([
                record.experiment.clone(),
                record.id.clone(),
                record.config_hash.clone(),
                i.to_string(),
                ratio.to_string(),
                sweep_max.to_string(),
                record.passed.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_records(&self) -> Result<Vec<ReportRecord>> {
        let text = fs::read_to_string(self.records_path())?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_and_sweeps() {
        let s = Stats::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!((s.max, s.median, s.min), (10.0, 2.5, 1.0));
        assert!(Stats::of(&[]).is_none());
        let per = vec![vec![1.0, 2.0, 1.5], vec![2.0, 2.0, 2.0]];
        assert_eq!(invariance_spread(&per), 2.0);
        assert_eq!(oscillation_growth(&per), 2.0);
        assert_eq!(oscillation_growth(&[vec![0.0, 0.0]]), 1.0);
        let table = sweep_table(&[0, 1, 2], &per);
        assert_eq!(table[1].ratios, vec![2.0, 2.0]);
    }

    #[test]
    fn writer_appends() {
        let dir = tempfile::tempdir().unwrap();
        let w = ReportWriter::new(dir.path().join("x")).unwrap();
        let mut r = ReportRecord::new("boundedness-scan", "x", "h", "one");
        r.ratios = vec![0.5, 0.25];
        r.sweep = sweep_table(&[0], &[vec![0.5], vec![0.25]]);
        w.append(&r).unwrap();
        w.append(&r).unwrap();
        assert_eq!(w.read_records().unwrap(), vec![r.clone(), r]);
        let csv = fs::read_to_string(w.summary_path()).unwrap();
        assert_eq!(csv.lines().count(), 5);
    }
}
