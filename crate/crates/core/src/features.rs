//! Boxcar pre-filter and the five handcrafted time-domain features.
//!
//! Moments use divisor `n`; kurtosis is the plain (non-excess) fourth
//! standardized moment, so a Gaussian scores about 3.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples averaged into one filtered value.
pub const AVERAGE_WINDOW: usize = 5;

/// Mean of every consecutive block of five samples.
pub fn average_downsample(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Empty);
    }
    if raw.len() % AVERAGE_WINDOW != 0 {
        return Err(Error::NotDivisible {
            len: raw.len(),
            factor: AVERAGE_WINDOW,
        });
    }
    Ok(raw
        .chunks_exact(AVERAGE_WINDOW)
        .map(|c| c.iter().sum::<f64>() / AVERAGE_WINDOW as f64)
        .collect())
}

/// Like [`average_downsample`] but drops a trailing partial block.
/// Used for reduced-length test snapshots whose length is not a multiple of 5.
pub fn average_downsample_truncating(raw: &[f64]) -> Result<Vec<f64>> {
    let n = raw.len() / AVERAGE_WINDOW * AVERAGE_WINDOW;
    average_downsample(&raw[..n])
}

fn mean(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    Ok(x.iter().sum::<f64>() / x.len() as f64)
}

/// Second, third and fourth central moments.
fn central_moments(x: &[f64]) -> Result<(f64, f64, f64)> {
    let mu = mean(x)?;
    let n = x.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    // Relative test: a constant signal leaves only rounding noise in m2.
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m2 <= (scale * 1e-12).powi(2) || m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((m2, m3, m4))
}

pub fn rms(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    Ok((x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt())
}

pub fn kurtosis(x: &[f64]) -> Result<f64> {
    let (m2, _, m4) = central_moments(x)?;
    Ok(m4 / (m2 * m2))
}

pub fn skewness(x: &[f64]) -> Result<f64> {
    let (m2, m3, _) = central_moments(x)?;
    Ok(m3 / m2.powf(1.5))
}

pub fn crest_factor(x: &[f64]) -> Result<f64> {
    let r = rms(x)?;
    if r == 0.0 {
        return Err(Error::ZeroRms);
    }
    let peak = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(peak / r)
}

pub fn peak_to_peak(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok(hi - lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandcraftedVector {
    pub rms: f64,
    pub kurtosis: f64,
    pub skewness: f64,
    pub crest_factor: f64,
    pub peak_to_peak: f64,
}

impl HandcraftedVector {
    pub const LEN: usize = 5;
    pub const NAMES: [&'static str; 5] = [
        "rms",
        "kurtosis",
        "skewness",
        "crest_factor",
        "peak_to_peak",
    ];

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.rms,
            self.kurtosis,
            self.skewness,
            self.crest_factor,
            self.peak_to_peak,
        ]
    }
}

/// All five features of a raw (not averaged) series.
pub fn handcrafted_vector(raw: &[f64]) -> Result<HandcraftedVector> {
    Ok(HandcraftedVector {
        rms: rms(raw)?,
        kurtosis: kurtosis(raw)?,
        skewness: skewness(raw)?,
        crest_factor: crest_factor(raw)?,
        peak_to_peak: peak_to_peak(raw)?,
    })
}

/// CSV export: `timestamp,rms,kurtosis,skewness,crest_factor,peak_to_peak`.
pub fn handcrafted_csv<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a HandcraftedVector)>,
) -> String {
    let mut out = String::from("timestamp");
    for name in HandcraftedVector::NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (ts, v) in rows {
        out.push_str(ts);
        for f in v.to_array() {
            out.push(',');
            out.push_str(&f.to_string());
        }
        out.push('\n');
    }
    out
}
