//! Adaptive threshold `T = K (mu_t + sigma_t)`, verdicts, and calibration of `K`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running mean and population standard deviation of training deviations (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviationStats {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl DeviationStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, deviation: f64) -> Result<()> {
        if !(deviation >= 0.0) || !deviation.is_finite() {
            return Err(Error::NegativeDeviation(deviation));
        }
        self.n += 1;
        let delta = deviation - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (deviation - self.mean);
        Ok(())
    }

    pub fn std(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.m2.max(0.0) / self.n as f64).sqrt()
    }

    pub(crate) fn raw_parts(&self) -> (u64, f64, f64) {
        (self.n, self.mean, self.m2)
    }

    pub(crate) fn from_raw_parts(n: u64, mean: f64, m2: f64) -> Self {
        Self { n, mean, m2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub k: f64,
    pub t: f64,
}

pub fn threshold(stats: &DeviationStats, k: f64) -> Result<Threshold> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidK(k));
    }
    if stats.n < 2 {
        return Err(Error::InsufficientStats(stats.n));
    }
    Ok(Threshold {
        k,
        t: k * (stats.mean + stats.std()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleVerdict {
    Healthy,
    Anomalous,
}

/// Anomalous only when the deviation is strictly above `t`.
pub fn classify_sample(deviation: f64, t: f64) -> SampleVerdict {
    if deviation > t {
        SampleVerdict::Anomalous
    } else {
        SampleVerdict::Healthy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BearingState {
    Healthy,
    Faulty,
}

impl BearingState {
    pub fn from_faulty(faulty: bool) -> Self {
        if faulty {
            BearingState::Faulty
        } else {
            BearingState::Healthy
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BearingState::Healthy => "healthy",
            BearingState::Faulty => "faulty",
        }
    }
}

impl fmt::Display for BearingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BearingVerdict {
    pub max_deviation: f64,
    pub threshold: f64,
    pub state: BearingState,
    /// Samples consumed before inference began.
    pub convergence_length: usize,
    /// Absolute sample index of the first flagged inference sample.
    pub first_flagged: Option<usize>,
    #[serde(skip)]
    pub inference_trace: Vec<f64>,
}

/// Judges a bearing from its inference-phase deviations (samples after convergence).
pub fn bearing_verdict(
    inference_trace: &[f64],
    t: f64,
    convergence_length: usize,
) -> Result<BearingVerdict> {
    if inference_trace.is_empty() {
        return Err(Error::EmptyInference);
    }
    let max_deviation = inference_trace
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let first_flagged = inference_trace
        .iter()
        .position(|&d| classify_sample(d, t) == SampleVerdict::Anomalous)
        .map(|i| convergence_length + i);
    Ok(BearingVerdict {
        max_deviation,
        threshold: t,
        state: BearingState::from_faulty(max_deviation > t),
        convergence_length,
        first_flagged,
        inference_trace: inference_trace.to_vec(),
    })
}

/// What calibration needs to know about one bearing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub mean: f64,
    pub std: f64,
    pub max_deviation: f64,
    pub faulty: bool,
}

impl CalibrationPoint {
    pub fn predicts_faulty(&self, k: f64) -> bool {
        self.max_deviation > k * (self.mean + self.std)
    }

    pub fn correct_at(&self, k: f64) -> bool {
        self.predicts_faulty(k) == self.faulty
    }
}

/// An ascending list of candidate `K` values, written `start:end:step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KGrid(Vec<f64>);

impl KGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if values.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::Config("K grid values must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("K grid must be strictly ascending".into()));
        }
        Ok(Self(values))
    }

    pub fn range(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || end < start {
            return Err(Error::Config(format!("bad K grid {start}:{end}:{step}")));
        }
        let n = ((end - start) / step + 1e-9).floor() as usize + 1;
        Self::new((0..n).map(|i| start + i as f64 * step).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for KGrid {
    /// 0.5 to 100 in steps of 0.5.
    fn default() -> Self {
        Self::range(0.5, 100.0, 0.5).expect("static grid")
    }
}

impl FromStr for KGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("K grid must be start:end:step, got {s:?}")))?;
        match parts.as_slice() {
            [a, b, step] => Self::range(*a, *b, *step),
            _ => Err(Error::Config(format!(
                "K grid must be start:end:step, got {s:?}"
            ))),
        }
    }
}

/// Percent of bearings judged correctly at each grid value.
pub fn accuracy_vs_k(points: &[CalibrationPoint], grid: &KGrid) -> Vec<(f64, f64)> {
    grid.values()
        .iter()
        .map(|&k| {
            let correct = points.iter().filter(|p| p.correct_at(k)).count();
            let pct = if points.is_empty() {
                0.0
            } else {
                100.0 * correct as f64 / points.len() as f64
            };
            (k, pct)
        })
        .collect()
}

pub fn accuracy_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("k,accuracy_percent\n");
    for (k, a) in curve {
        out.push_str(&format!("{k},{a}\n"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KCalibration {
    pub k: f64,
    /// Best accuracy over the grid, in percent.
    pub accuracy: f64,
    /// First and last grid value of the chosen max-accuracy run.
    pub plateau: (f64, f64),
}

/// Picks the midpoint of the widest contiguous grid run that reaches the best
/// accuracy; ties go to the lowest run.
pub fn calibrate_k(points: &[CalibrationPoint], grid: &KGrid) -> Result<KCalibration> {
    if points.is_empty() {
        return Err(Error::Config(
            "calibration needs at least one bearing".into(),
        ));
    }
    let curve = accuracy_vs_k(points, grid);
    let best = curve
        .iter()
        .map(|&(_, a)| a)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut widest: Option<(f64, f64)> = None;
    let mut run_start: Option<f64> = None;
    for (i, &(k, a)) in curve.iter().enumerate() {
        if a == best {
            let start = *run_start.get_or_insert(k);
            let run_ends = curve.get(i + 1).is_none_or(|&(_, next)| next != best);
            if run_ends {
                if widest.is_none_or(|(lo, hi)| k - start > hi - lo) {
                    widest = Some((start, k));
                }
                run_start = None;
            }
        }
    }
    let (lo, hi) = widest.expect("grid is non-empty so some point attains the max");
    Ok(KCalibration {
        k: 0.5 * (lo + hi),
        accuracy: best,
        plateau: (lo, hi),
    })
}
