use serde::{Deserialize, Serialize};

use crate::anomaly::{classify_sample, threshold, DeviationStats, SampleVerdict, Threshold};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::oselm::{observe, ConvergenceMonitor, OselmModel, Phase, INIT_BATCH};

/// Where in the online lifecycle a sample was consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordPhase {
    /// Part of the 10-sample batch that initializes `beta`.
    Init,
    /// Sequential update, up to and including the convergence sample.
    Training,
    Inference,
}

impl RecordPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordPhase::Init => "init",
            RecordPhase::Training => "training",
            RecordPhase::Inference => "inference",
        }
    }
}

/// Output for one consumed sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub phase: RecordPhase,
    pub deviation: f64,
    /// `%dbeta` of the update this sample caused (training samples only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_beta_percent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub flag: bool,
}

/// The online one-class pipeline for a single bearing: buffer the init batch,
/// update until converged, then score. Training-phase deviations feed the
/// threshold statistics. Init samples are scored against `beta0`; sequential
/// samples are scored before their update is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSession {
    model: OselmModel,
    monitor: ConvergenceMonitor,
    stats: DeviationStats,
    init_buffer: Vec<Vec<f64>>,
    k: Option<f64>,
    threshold: Option<Threshold>,
    next_index: usize,
}

impl MonitorSession {
    /// `k = None` runs without flagging (the caller thresholds afterwards).
    pub fn new(model: OselmModel, k: Option<f64>) -> Result<Self> {
        if model.phase() != Phase::CollectingInitBatch {
            return Err(Error::Phase {
                op: "new session",
                phase: model.phase(),
            });
        }
        if let Some(k) = k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidK(k));
            }
        }
        Ok(Self {
            model,
            monitor: ConvergenceMonitor::default(),
            stats: DeviationStats::new(),
            init_buffer: Vec::with_capacity(INIT_BATCH),
            k,
            threshold: None,
            next_index: 0,
        })
    }

    pub fn model(&self) -> &OselmModel {
        &self.model
    }

    pub fn stats(&self) -> &DeviationStats {
        &self.stats
    }

    pub fn monitor(&self) -> &ConvergenceMonitor {
        &self.monitor
    }

    pub fn threshold(&self) -> Option<Threshold> {
        self.threshold
    }

    pub fn samples_consumed(&self) -> usize {
        self.next_index
    }

    pub fn phase(&self) -> Phase {
        self.model.phase()
    }

    /// Consumes one feature vector. Returns zero records while the init batch
    /// is filling, ten when it completes, and one per sample afterwards.
    pub fn push(&mut self, x: &[f64]) -> Result<Vec<SampleRecord>> {
        if x.len() != self.model.n_in() {
            return Err(Error::Shape {
                expected: self.model.n_in(),
                got: x.len(),
            });
        }
        // Validate before mutating so a bad frame leaves the session untouched.
        self.model.hidden(x)?;
        let index = self.next_index;
        let records = match self.model.phase() {
            Phase::CollectingInitBatch => {
                self.init_buffer.push(x.to_vec());
                if self.init_buffer.len() < INIT_BATCH {
                    self.next_index += 1;
                    return Ok(Vec::new());
                }
                self.model.init_batch(&self.init_buffer)?;
                let first = index + 1 - INIT_BATCH;
                let mut out = Vec::with_capacity(INIT_BATCH);
                for (i, s) in std::mem::take(&mut self.init_buffer).iter().enumerate() {
                    let (_, dev) = self.model.predict(s)?;
                    self.stats.accumulate(dev)?;
                    out.push(SampleRecord {
                        index: first + i,
                        phase: RecordPhase::Init,
                        deviation: dev,
                        delta_beta_percent: None,
                        threshold: None,
                        flag: false,
                    });
                }
                out
            }
            Phase::OnlineTraining => {
                let (_, dev) = self.model.predict(x)?;
                let pct = self.model.sequential_update(x)?;
                self.stats.accumulate(dev)?;
                if observe(&mut self.model, &mut self.monitor, pct)? {
                    if let Some(k) = self.k {
                        self.threshold = Some(threshold(&self.stats, k)?);
                    }
                }
                vec![SampleRecord {
                    index,
                    phase: RecordPhase::Training,
                    deviation: dev,
                    delta_beta_percent: Some(pct),
                    threshold: self.threshold.map(|t| t.t),
                    flag: false,
                }]
            }
            Phase::Inference => {
                let (_, dev) = self.model.predict(x)?;
                let t = self.threshold.map(|t| t.t);
                vec![SampleRecord {
                    index,
                    phase: RecordPhase::Inference,
                    deviation: dev,
                    delta_beta_percent: None,
                    threshold: t,
                    flag: t.is_some_and(|t| classify_sample(dev, t) == SampleVerdict::Anomalous),
                }]
            }
        };
        self.next_index += 1;
        Ok(records)
    }

    /// Checkpoint layout: magic `BMSESSN\0`, version u32, the OS-ELM state
    /// (see [`OselmModel::to_bytes`], without its header), monitor
    /// (`Tc` f64, window u32, consecutive u32, converged-at u64 + 1 or 0),
    /// stats (n u64, mean f64, m2 f64), `K` and `T` as flag byte + f64,
    /// next index u64, then the pending init-batch rows (count u32, each `n_in` f64).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(SESSION_MAGIC, SESSION_VERSION);
        self.model.write_into(&mut w);
        w.f64(self.monitor.tc_percent);
        w.u32(self.monitor.window as u32);
        w.u32(self.monitor.consecutive as u32);
        w.u64(self.monitor.converged_at.map_or(0, |c| c as u64 + 1));
        let (n, mean, m2) = self.stats.raw_parts();
        w.u64(n);
        w.f64(mean);
        w.f64(m2);
        match self.k {
            Some(k) => {
                w.u8(1);
                w.f64(k);
            }
            None => {
                w.u8(0);
                w.f64(0.0);
            }
        }
        match self.threshold {
            Some(t) => {
                w.u8(1);
                w.f64(t.t);
            }
            None => {
                w.u8(0);
                w.f64(0.0);
            }
        }
        w.u64(self.next_index as u64);
        w.u32(self.init_buffer.len() as u32);
        for row in &self.init_buffer {
            w.f64s(row.iter());
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, SESSION_MAGIC, SESSION_VERSION)?;
        let model = OselmModel::read_from(&mut r)?;
        let monitor = ConvergenceMonitor {
            tc_percent: r.f64()?,
            window: r.u32()? as usize,
            consecutive: r.u32()? as usize,
            converged_at: match r.u64()? {
                0 => None,
                c => Some(c as usize - 1),
            },
        };
        let stats = DeviationStats::from_raw_parts(r.u64()?, r.f64()?, r.f64()?);
        let k = match (r.u8()?, r.f64()?) {
            (0, _) => None,
            (_, k) => Some(k),
        };
        let threshold = match (r.u8()?, r.f64()?) {
            (0, _) => None,
            (_, t) => Some(Threshold {
                k: k.ok_or_else(|| Error::ModelFormat("threshold without K".into()))?,
                t,
            }),
        };
        let next_index = r.u64()? as usize;
        let pending = r.u32()? as usize;
        if pending >= INIT_BATCH {
            return Err(Error::ModelFormat("init buffer overflow".into()));
        }
        let init_buffer = (0..pending)
            .map(|_| r.f64s(model.n_in()))
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            model,
            monitor,
            stats,
            init_buffer,
            k,
            threshold,
            next_index,
        })
    }
}

const SESSION_MAGIC: &[u8; 8] = b"BMSESSN\0";
const SESSION_VERSION: u32 = 1;

/// Everything a finished offline pass over one bearing produced.
#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub records: Vec<SampleRecord>,
    pub stats: DeviationStats,
    pub convergence_length: usize,
    pub model: OselmModel,
}

impl OnlineRun {
    pub fn inference_deviations(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.phase == RecordPhase::Inference)
            .map(|r| r.deviation)
            .collect()
    }

    pub fn max_inference_deviation(&self) -> f64 {
        self.inference_deviations()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Streams every feature vector of a bearing through a fresh session. Fails if
/// the monitor never fires or nothing is left to score after convergence.
pub fn run_online<X: AsRef<[f64]>>(
    label: &str,
    features: &[X],
    model: OselmModel,
) -> Result<OnlineRun> {
    let mut session = MonitorSession::new(model, None)?;
    let mut records = Vec::with_capacity(features.len());
    for x in features {
        records.extend(session.push(x.as_ref())?);
    }
    let Some(convergence_length) = session.monitor.converged_at else {
        let tail: Vec<f64> = records
            .iter()
            .rev()
            .filter_map(|r| r.delta_beta_percent)
            .take(20)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        return Err(Error::NotConverged {
            bearing: label.to_string(),
            samples: features.len(),
            tail,
        });
    };
    if convergence_length >= features.len() {
        return Err(Error::EmptyInference);
    }
    Ok(OnlineRun {
        records,
        stats: session.stats,
        convergence_length,
        model: session.model,
    })
}
