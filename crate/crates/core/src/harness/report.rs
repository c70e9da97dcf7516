use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, FoldReport, RunReport};
use crate::anomaly::{accuracy_csv, CalibrationPoint};
use crate::dataset::{GroundTruth, TIMESTAMP_FORMAT};
use crate::error::{Error, Result};
use crate::features::handcrafted_csv;

/// Which report files to write. Models are always written.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    #[default]
    All,
}

impl ReportFormat {
    fn csv(self) -> bool {
        matches!(self, ReportFormat::Csv | ReportFormat::All)
    }

    fn json(self) -> bool {
        matches!(self, ReportFormat::Json | ReportFormat::All)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn verdicts_csv(folds: &[FoldReport]) -> String {
    let mut s = String::from("bearing,max_deviation,T,K,state,ground_truth\n");
    for f in folds {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            f.test,
            f.verdict.max_deviation,
            f.verdict.threshold,
            f.k,
            f.verdict.state,
            f.ground_truth.as_str()
        );
    }
    s
}

/// Per-bearing inputs to the accuracy-vs-K sweep; `sweep-k` reads this back.
pub fn bearing_stats_csv(folds: &[FoldReport]) -> String {
    let mut s = String::from(
        "bearing,mu_t,sigma_t,max_deviation,ground_truth,convergence_length,samples\n",
    );
    for f in folds {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            f.test,
            f.mu_t,
            f.sigma_t,
            f.verdict.max_deviation,
            f.ground_truth.as_str(),
            f.convergence_length,
            f.samples
        );
    }
    s
}

/// Full trace of the test bearing, training samples included.
pub fn deviations_csv(fold: &FoldReport) -> String {
    let mut s = String::from("sample_index,deviation,phase\n");
    for r in &fold.records {
        let _ = writeln!(s, "{},{},{}", r.index, r.deviation, r.phase.as_str());
    }
    s
}

/// Writes the deterministic report set into `dir` (created if missing).
pub fn emit_report(report: &RunReport, dir: &Path, format: ReportFormat) -> Result<()> {
    let models = dir.join("models");
    fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
    if format.csv() {
        write(&dir.join("verdicts.csv"), verdicts_csv(&report.folds))?;
        write(
            &dir.join("accuracy_vs_k.csv"),
            accuracy_csv(&report.accuracy_vs_k),
        )?;
        write(
            &dir.join("bearing_stats.csv"),
            bearing_stats_csv(&report.folds),
        )?;
        for f in &report.folds {
            write(
                &dir.join(format!("deviations_{}.csv", f.test)),
                deviations_csv(f),
            )?;
        }
    }
    if format.json() {
        for f in &report.folds {
            write(&dir.join(format!("fold_{}.json", f.test)), json(f))?;
        }
        write(&dir.join("run.json"), json(report))?;
    }
    for f in &report.folds {
        if let Some(enc) = &f.encoder_model {
            write(
                &models.join(format!("encoder_{}.bin", f.test)),
                enc.to_bytes(),
            )?;
        }
        if let Some(m) = &f.oselm_model {
            write(&models.join(format!("oselm_{}.bin", f.test)), m.to_bytes())?;
        }
    }
    Ok(())
}

/// Wall-clock stage timings. Kept apart from the deterministic reports.
pub fn emit_timings(folds: &[FoldReport], dir: &Path) -> Result<()> {
    let mut s = String::from(
        "bearing,encoder_training_s,calibration_s,test_stream_s,inference_per_sample_us\n",
    );
    for f in folds {
        let t = f.timings;
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.3}",
            f.test,
            t.encoder_training_s,
            t.calibration_s,
            t.test_stream_s,
            t.inference_per_sample_us
        );
    }
    write(&dir.join("timings.csv"), s)
}

/// Writes `features_<id>.csv` (timestamp and the five handcrafted features)
/// for every bearing in the corpus.
pub fn emit_features(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for b in &corpus.bearings {
        let stamps: Vec<String> = b
            .timestamps
            .iter()
            .map(|t| t.format(TIMESTAMP_FORMAT).to_string())
            .collect();
        let csv = handcrafted_csv(stamps.iter().map(String::as_str).zip(&b.handcrafted));
        write(&dir.join(format!("features_{}.csv", b.id)), csv)?;
    }
    Ok(())
}

/// Parses a `bearing_stats.csv` back into calibration points.
pub fn read_bearing_stats(path: &Path) -> Result<Vec<(String, CalibrationPoint)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad =
        |line: usize, msg: &str| Error::Config(format!("{}:{}: {msg}", path.display(), line + 1));
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.starts_with("bearing,mu_t,sigma_t,max_deviation,ground_truth") => {}
        _ => return Err(bad(0, "not a bearing_stats.csv header")),
    }
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 5 {
            return Err(bad(i, "expected at least 5 columns"));
        }
        let num = |c: &str| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| bad(i, &format!("bad number {c:?}")))
        };
        let truth: GroundTruth = cols[4]
            .trim()
            .parse()
            .map_err(|_| bad(i, "bad ground truth"))?;
        out.push((
            cols[0].trim().to_string(),
            CalibrationPoint {
                mean: num(cols[1])?,
                std: num(cols[2])?,
                max_deviation: num(cols[3])?,
                faulty: truth.is_faulty(),
            },
        ));
    }
    if out.is_empty() {
        return Err(Error::Empty);
    }
    Ok(out)
}
