use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::IMS_ROWS;
use crate::error::{Error, Result};

/// Timestamp of synthetic snapshot `index`: ten minutes apart from the start
/// of the first IMS test.
pub fn synthetic_timestamp(index: usize) -> NaiveDateTime {
    let start = NaiveDate::from_ymd_opt(2004, 2, 12)
        .and_then(|d| d.and_hms_opt(10, 32, 39))
        .expect("valid start time");
    start + Duration::minutes(10 * index as i64)
}

/// Synthetic vibration source: Gaussian noise, plus a train of ringing
/// impacts from `fault_onset` onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_snapshots: usize,
    pub snapshot_len: usize,
    pub fault_onset: Option<usize>,
    pub noise_sigma: f64,
    /// Peak amplitude of each impact at the onset snapshot.
    pub impulse_amplitude: f64,
    /// Amplitude added per snapshot after onset.
    pub impulse_growth: f64,
    /// Samples between impacts.
    pub impulse_period: usize,
    pub rng_seed: u64,
}

/// Decay constant of an impact, in samples.
const RING_DECAY: f64 = 8.0;
/// Period of the excited resonance, in samples.
const RING_PERIOD: f64 = 20.0;
const RING_LEN: usize = 48;

impl SyntheticConfig {
    pub fn healthy(n_snapshots: usize, noise_sigma: f64, rng_seed: u64) -> Self {
        Self {
            n_snapshots,
            snapshot_len: IMS_ROWS,
            fault_onset: None,
            noise_sigma,
            impulse_amplitude: 0.0,
            impulse_growth: 0.0,
            impulse_period: 200,
            rng_seed,
        }
    }

    pub fn with_fault(mut self, onset: usize, amplitude: f64, growth: f64) -> Self {
        self.fault_onset = Some(onset);
        self.impulse_amplitude = amplitude;
        self.impulse_growth = growth;
        self
    }

    pub fn with_snapshot_len(mut self, len: usize) -> Self {
        self.snapshot_len = len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.snapshot_len == 0 || self.impulse_period == 0 {
            return bad("snapshot_len and impulse_period must be positive".into());
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be > 0, got {}", self.noise_sigma));
        }
        if let Some(onset) = self.fault_onset {
            if onset > self.n_snapshots {
                return bad(format!(
                    "fault_onset {onset} exceeds n_snapshots {}",
                    self.n_snapshots
                ));
            }
        }
        if self.impulse_amplitude < 0.0 || self.impulse_growth < 0.0 {
            return bad("impulse amplitude and growth must be non-negative".into());
        }
        Ok(())
    }

    /// Impact amplitude of snapshot `index`, zero before onset.
    pub fn amplitude_at(&self, index: usize) -> f64 {
        match self.fault_onset {
            Some(onset) if index >= onset => {
                self.impulse_amplitude + self.impulse_growth * (index - onset) as f64
            }
            _ => 0.0,
        }
    }
}

/// Generates the snapshot sequence. Identical configs give identical output.
pub fn synth_bearing(config: &SyntheticConfig) -> Result<Vec<Vec<f64>>> {
    Ok(SyntheticSnapshots::new(config)?.collect())
}

/// Lazy form of [`synth_bearing`]: yields the same snapshots one at a time.
#[derive(Debug, Clone)]
pub struct SyntheticSnapshots {
    config: SyntheticConfig,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    ring: Vec<f64>,
    next: usize,
}

impl SyntheticSnapshots {
    pub fn new(config: &SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let ring = (0..RING_LEN)
            .map(|t| {
                let t = t as f64;
                (-t / RING_DECAY).exp() * (std::f64::consts::TAU * t / RING_PERIOD).cos()
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            noise: Normal::new(0.0, config.noise_sigma).expect("sigma validated"),
            ring,
            next: 0,
        })
    }
}

impl Iterator for SyntheticSnapshots {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let i = self.next;
        if i >= self.config.n_snapshots {
            return None;
        }
        self.next += 1;
        let cfg = &self.config;
        let mut x: Vec<f64> = (0..cfg.snapshot_len)
            .map(|_| self.noise.sample(&mut self.rng))
            .collect();
        if cfg.fault_onset.is_some_and(|onset| i >= onset) {
            let amp = cfg.amplitude_at(i);
            let mut start = self.rng.random_range(0..cfg.impulse_period);
            while start < x.len() {
                for (k, r) in self.ring.iter().enumerate() {
                    if let Some(v) = x.get_mut(start + k) {
                        *v += amp * r;
                    }
                }
                start += cfg.impulse_period;
            }
        }
        Some(x)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.config.n_snapshots - self.next;
        (n, Some(n))
    }
}

impl ExactSizeIterator for SyntheticSnapshots {}
