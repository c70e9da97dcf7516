use bearing_monitor::anomaly::{self, CalibrationPoint, DeviationStats, KGrid};
use bearing_monitor::autoencoder::{self, EncoderProvenance, TrainConfig};
use bearing_monitor::dataset::{make_loo_folds, synth_bearing, SyntheticConfig};
use bearing_monitor::features;
use bearing_monitor::harness::{
    self, derive_seed, Corpus, FeatureMode, PipelineConfig, SampleRecord, SyntheticCorpusConfig,
};
use bearing_monitor::oselm::{OselmModel, Phase, UpdateRule};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use sha2::{Digest, Sha256};

fn err(e: bearing_monitor::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::CollectingInitBatch => "collecting_init_batch",
        Phase::OnlineTraining => "online_training",
        Phase::Inference => "inference",
    }
}

fn update_rule(name: &str) -> PyResult<UpdateRule> {
    match name {
        "sherman-morrison" => Ok(UpdateRule::ShermanMorrison),
        "cholesky" => Ok(UpdateRule::Cholesky),
        _ => Err(PyValueError::new_err(format!(
            "unknown update rule {name:?}"
        ))),
    }
}

#[pyfunction]
fn rms(x: Vec<f64>) -> PyResult<f64> {
    features::rms(&x).map_err(err)
}

#[pyfunction]
fn kurtosis(x: Vec<f64>) -> PyResult<f64> {
    features::kurtosis(&x).map_err(err)
}

#[pyfunction]
fn skewness(x: Vec<f64>) -> PyResult<f64> {
    features::skewness(&x).map_err(err)
}

#[pyfunction]
fn crest_factor(x: Vec<f64>) -> PyResult<f64> {
    features::crest_factor(&x).map_err(err)
}

#[pyfunction]
fn peak_to_peak(x: Vec<f64>) -> PyResult<f64> {
    features::peak_to_peak(&x).map_err(err)
}

/// `[rms, kurtosis, skewness, crest_factor, peak_to_peak]` of a raw snapshot.
#[pyfunction]
fn handcrafted_features(raw: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(features::handcrafted_vector(&raw)
        .map_err(err)?
        .to_array()
        .to_vec())
}

#[pyfunction]
fn average_downsample(raw: Vec<f64>) -> PyResult<Vec<f64>> {
    features::average_downsample(&raw).map_err(err)
}

/// Returns `(mu_t, sigma_t, T)` for a list of training deviations.
#[pyfunction]
fn threshold(deviations: Vec<f64>, k: f64) -> PyResult<(f64, f64, f64)> {
    let mut stats = DeviationStats::new();
    for d in deviations {
        stats.accumulate(d).map_err(err)?;
    }
    let t = anomaly::threshold(&stats, k).map_err(err)?;
    Ok((stats.mean, stats.std(), t.t))
}

/// `points` are `(mu_t, sigma_t, max_deviation, faulty)` tuples. Returns
/// `(k, accuracy_percent, (plateau_lo, plateau_hi))`.
#[pyfunction]
#[pyo3(signature = (points, grid = "0.5:100:0.5"))]
fn calibrate_k(points: Vec<(f64, f64, f64, bool)>, grid: &str) -> PyResult<(f64, f64, (f64, f64))> {
    let grid: KGrid = grid.parse().map_err(err)?;
    let points: Vec<CalibrationPoint> = points
        .into_iter()
        .map(|(mean, std, max_deviation, faulty)| CalibrationPoint {
            mean,
            std,
            max_deviation,
            faulty,
        })
        .collect();
    let cal = anomaly::calibrate_k(&points, &grid).map_err(err)?;
    Ok((cal.k, cal.accuracy, cal.plateau))
}

/// Raw snapshots of one synthetic bearing life.
#[pyfunction]
#[pyo3(signature = (n_snapshots, snapshot_len = 20480, noise_sigma = 0.5, seed = 0, fault_onset = None, impulse_amplitude = None, impulse_growth = 0.0))]
fn synth(
    py: Python<'_>,
    n_snapshots: usize,
    snapshot_len: usize,
    noise_sigma: f64,
    seed: u64,
    fault_onset: Option<usize>,
    impulse_amplitude: Option<f64>,
    impulse_growth: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let mut cfg =
        SyntheticConfig::healthy(n_snapshots, noise_sigma, seed).with_snapshot_len(snapshot_len);
    if let Some(onset) = fault_onset {
        cfg = cfg.with_fault(
            onset,
            impulse_amplitude.unwrap_or(3.0 * noise_sigma),
            impulse_growth,
        );
    }
    py.detach(|| synth_bearing(&cfg)).map_err(err)
}

#[pyclass(module = "pybearing", frozen)]
struct Encoder {
    inner: autoencoder::Encoder,
}

#[pymethods]
impl Encoder {
    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn code_dim(&self) -> usize {
        self.inner.code_dim()
    }

    #[getter]
    fn train_set_hash(&self) -> String {
        self.inner
            .provenance
            .train_set_hash
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn encode(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.encode(&x).map_err(err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: autoencoder::Encoder::from_bytes(data).map_err(err)?,
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        autoencoder::save_encoder(&self.inner, &path).map_err(err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: autoencoder::load_encoder(&path).map_err(err)?,
        })
    }
}

/// One epoch of autoencoder training on averaged snapshots; returns the encoder half.
#[pyfunction]
#[pyo3(signature = (data, seed = 0, batch_size = 32, learning_rate = 0.001))]
fn train_encoder(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    seed: u64,
    batch_size: usize,
    learning_rate: f64,
) -> PyResult<Encoder> {
    let config = TrainConfig {
        batch_size,
        learning_rate,
        init_seed: derive_seed(seed, "ae-init", 0),
        shuffle_seed: derive_seed(seed, "ae-shuffle", 0),
        ..TrainConfig::default()
    };
    let outcome = py
        .detach(|| autoencoder::train(&data, &config))
        .map_err(err)?;
    let mut hasher = Sha256::new();
    for x in &data {
        for v in x {
            hasher.update(v.to_le_bytes());
        }
    }
    Ok(Encoder {
        inner: outcome.params.encoder(EncoderProvenance {
            init_seed: config.init_seed,
            shuffle_seed: config.shuffle_seed,
            train_set_hash: hasher.finalize().into(),
        }),
    })
}

#[pyclass(module = "pybearing")]
struct Oselm {
    inner: OselmModel,
}

#[pymethods]
impl Oselm {
    #[new]
    #[pyo3(signature = (n_in, hidden = 10, c = 100.0, seed = 0, update_rule = "sherman-morrison"))]
    fn new(n_in: usize, hidden: usize, c: f64, seed: u64, update_rule: &str) -> PyResult<Self> {
        let rule = self::update_rule(update_rule)?;
        Ok(Self {
            inner: OselmModel::init_random(n_in, hidden, c, seed)
                .map_err(err)?
                .with_update_rule(rule),
        })
    }

    /// Exactly ten samples; targets default to 1.
    #[pyo3(signature = (samples, targets = None))]
    fn init_batch(&mut self, samples: Vec<Vec<f64>>, targets: Option<Vec<f64>>) -> PyResult<()> {
        let targets = targets.unwrap_or_else(|| vec![1.0; samples.len()]);
        self.inner
            .init_batch_with_targets(&samples, &targets)
            .map_err(err)
    }

    /// One recursive update; returns the percent change of beta.
    #[pyo3(signature = (x, target = 1.0))]
    fn update(&mut self, x: Vec<f64>, target: f64) -> PyResult<f64> {
        self.inner
            .sequential_update_with_target(&x, target)
            .map_err(err)
    }

    /// Returns `(y, |1 - y|)`.
    fn predict(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        self.inner.predict(&x).map_err(err)
    }

    fn enter_inference(&mut self) -> PyResult<()> {
        self.inner.enter_inference().map_err(err)
    }

    #[getter]
    fn beta(&self) -> Option<Vec<f64>> {
        self.inner.beta().map(|b| b.as_slice().to_vec())
    }

    #[getter]
    fn phase(&self) -> &'static str {
        phase_name(self.inner.phase())
    }

    #[getter]
    fn samples_seen(&self) -> usize {
        self.inner.samples_seen()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: OselmModel::from_bytes(data).map_err(err)?,
        })
    }
}

fn record_dict<'py>(py: Python<'py>, r: &SampleRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("index", r.index)?;
    d.set_item("phase", r.phase.as_str())?;
    d.set_item("deviation", r.deviation)?;
    d.set_item("delta_beta_percent", r.delta_beta_percent)?;
    d.set_item("T", r.threshold)?;
    d.set_item("flag", r.flag)?;
    Ok(d)
}

#[pyclass(module = "pybearing")]
struct MonitorSession {
    inner: harness::MonitorSession,
}

#[pymethods]
impl MonitorSession {
    /// Without `k` the session scores but never flags.
    #[new]
    #[pyo3(signature = (n_in, k = None, hidden = 10, c = 100.0, seed = 0, update_rule = "sherman-morrison"))]
    fn new(
        n_in: usize,
        k: Option<f64>,
        hidden: usize,
        c: f64,
        seed: u64,
        update_rule: &str,
    ) -> PyResult<Self> {
        let model = Oselm::new(n_in, hidden, c, seed, update_rule)?.inner;
        Ok(Self {
            inner: harness::MonitorSession::new(model, k).map_err(err)?,
        })
    }

    /// Feeds one feature vector; returns the records it released (several
    /// once the init batch fills, none while it is filling).
    fn push<'py>(&mut self, py: Python<'py>, x: Vec<f64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let records = self.inner.push(&x).map_err(err)?;
        records.iter().map(|r| record_dict(py, r)).collect()
    }

    #[getter]
    fn threshold(&self) -> Option<f64> {
        self.inner.threshold().map(|t| t.t)
    }

    #[getter]
    fn converged_at(&self) -> Option<usize> {
        self.inner.monitor().converged_at
    }

    #[getter]
    fn mu_t(&self) -> f64 {
        self.inner.stats().mean
    }

    #[getter]
    fn sigma_t(&self) -> f64 {
        self.inner.stats().std()
    }

    #[getter]
    fn phase(&self) -> &'static str {
        phase_name(self.inner.phase())
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: harness::MonitorSession::from_bytes(data).map_err(err)?,
        })
    }
}

/// Leave-one-out run over the synthetic twelve-bearing corpus. Returns the
/// run report as JSON.
#[pyfunction]
#[pyo3(signature = (mode = "handcrafted", seed = 0, n_snapshots = 2000, snapshot_len = 8192, corpus_seed = 2024))]
fn run_synthetic(
    py: Python<'_>,
    mode: &str,
    seed: u64,
    n_snapshots: usize,
    snapshot_len: usize,
    corpus_seed: u64,
) -> PyResult<String> {
    let mode = match mode {
        "auto" => FeatureMode::Auto,
        "handcrafted" => FeatureMode::Handcrafted,
        _ => {
            return Err(PyValueError::new_err(format!(
                "mode must be auto or handcrafted, got {mode:?}"
            )))
        }
    };
    let corpus_cfg = SyntheticCorpusConfig {
        n_snapshots,
        snapshot_len,
        seed: corpus_seed,
        ..SyntheticCorpusConfig::default()
    };
    let report = py
        .detach(|| {
            let corpus = Corpus::synthetic(&corpus_cfg)?;
            let folds = make_loo_folds(&corpus.manifest())?;
            harness::run_all(&corpus, &folds, &PipelineConfig::new(mode, seed))
        })
        .map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pybearing(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(rms, m)?)?;
    m.add_function(wrap_pyfunction!(kurtosis, m)?)?;
    m.add_function(wrap_pyfunction!(skewness, m)?)?;
    m.add_function(wrap_pyfunction!(crest_factor, m)?)?;
    m.add_function(wrap_pyfunction!(peak_to_peak, m)?)?;
    m.add_function(wrap_pyfunction!(handcrafted_features, m)?)?;
    m.add_function(wrap_pyfunction!(average_downsample, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_k, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train_encoder, m)?)?;
    m.add_function(wrap_pyfunction!(run_synthetic, m)?)?;
    m.add_class::<Encoder>()?;
    m.add_class::<Oselm>()?;
    m.add_class::<MonitorSession>()?;
    Ok(())
}
