//! Leave-one-out orchestration: per-fold encoder training, K calibration on the
//! eleven training bearings, online train/infer on the held-out bearing, and
//! report emission. Also hosts the streaming ingest mode.

mod data;
mod report;
mod seeds;
mod session;
mod stream;

use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anomaly::{
    accuracy_vs_k, bearing_verdict, calibrate_k, threshold, BearingState, BearingVerdict,
    CalibrationPoint, KCalibration, KGrid,
};
use crate::autoencoder::{train, Encoder, EncoderProvenance, TrainConfig};
use crate::dataset::{BearingId, GroundTruth, LooFold};
use crate::error::{Error, Result};
use crate::features::{average_downsample_truncating, handcrafted_vector, HandcraftedVector};
use crate::oselm::{OselmModel, UpdateRule, DEFAULT_C, DEFAULT_HIDDEN};

pub use data::{preprocess, BearingData, Corpus, SyntheticCorpusConfig};
pub use report::{
    bearing_stats_csv, deviations_csv, emit_features, emit_report, emit_timings,
    read_bearing_stats, verdicts_csv, ReportFormat,
};
pub use seeds::derive_seed;
pub use session::{run_online, MonitorSession, OnlineRun, RecordPhase, SampleRecord};
pub use stream::{
    load_checkpoint, parse_frame, save_checkpoint, serve_tcp, stream_ingest, StreamOptions,
    StreamSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Code layer of the fold's autoencoder.
    Auto,
    /// RMS, kurtosis, skewness, crest factor, peak-to-peak of the raw series.
    Handcrafted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OselmConfig {
    pub hidden: usize,
    pub c: f64,
    pub update_rule: UpdateRule,
}

impl Default for OselmConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            c: DEFAULT_C,
            update_rule: UpdateRule::default(),
        }
    }
}

impl OselmConfig {
    pub fn build(&self, n_in: usize, seed: u64) -> Result<OselmModel> {
        Ok(OselmModel::init_random(n_in, self.hidden, self.c, seed)?
            .with_update_rule(self.update_rule))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub feature_mode: FeatureMode,
    /// Seeds inside are ignored; each fold derives its own from `master_seed`.
    pub ae: TrainConfig,
    pub oselm: OselmConfig,
    pub k_grid: KGrid,
    /// Skip calibration and use this `K` for every fold.
    pub fixed_k: Option<f64>,
    pub master_seed: u64,
}

impl PipelineConfig {
    pub fn new(feature_mode: FeatureMode, master_seed: u64) -> Self {
        Self {
            feature_mode,
            ae: TrainConfig::default(),
            oselm: OselmConfig::default(),
            k_grid: KGrid::default(),
            fixed_k: None,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ae.validate()?;
        if self.oselm.hidden == 0 || !(self.oselm.c > 0.0 && self.oselm.c.is_finite()) {
            return Err(Error::Config("OS-ELM needs hidden >= 1 and C > 0".into()));
        }
        if let Some(k) = self.fixed_k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidK(k));
            }
        }
        Ok(())
    }

    fn fold_train_config(&self, fold_index: usize) -> TrainConfig {
        TrainConfig {
            init_seed: derive_seed(self.master_seed, "ae-init", fold_index as u64),
            shuffle_seed: derive_seed(self.master_seed, "ae-shuffle", fold_index as u64),
            ..self.ae.clone()
        }
    }

    /// OS-ELM random layer seed of the fold holding out `test`. Every bearing
    /// in the fold, calibration and test alike, gets the same random layer.
    pub fn oselm_seed(&self, test: BearingId) -> u64 {
        derive_seed(self.master_seed, "oselm", bearing_index(test) as u64)
    }
}

fn bearing_index(id: BearingId) -> usize {
    (id.dataset as usize - 1) * 4 + (id.bearing as usize - 1)
}

/// Turns snapshots into OS-ELM inputs. Both modes feed the same online path.
#[derive(Debug, Clone)]
pub enum FeatureExtractor {
    Auto(Encoder),
    Handcrafted,
}

impl FeatureExtractor {
    pub fn n_in(&self) -> usize {
        match self {
            FeatureExtractor::Auto(enc) => enc.code_dim(),
            FeatureExtractor::Handcrafted => HandcraftedVector::LEN,
        }
    }

    /// Features of one raw snapshot series.
    pub fn from_raw(&self, raw: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureExtractor::Auto(enc) => enc.encode(&average_downsample_truncating(raw)?),
            FeatureExtractor::Handcrafted => Ok(handcrafted_vector(raw)?.to_array().to_vec()),
        }
    }

    /// Features of every preprocessed snapshot of a bearing.
    pub fn features_of(&self, bearing: &BearingData) -> Result<Vec<Vec<f64>>> {
        match self {
            FeatureExtractor::Auto(enc) => bearing.filtered.iter().map(|x| enc.encode(x)).collect(),
            FeatureExtractor::Handcrafted => Ok(bearing
                .handcrafted
                .iter()
                .map(|h| h.to_array().to_vec())
                .collect()),
        }
    }
}

/// Trains the fold's autoencoder on the averaged snapshots of its eleven
/// training bearings. The held-out bearing is never read.
pub fn train_fold_encoder(
    fold: &LooFold,
    corpus: &Corpus,
    config: &PipelineConfig,
) -> Result<Encoder> {
    assert!(
        !fold.train.contains(&fold.test),
        "test bearing leaked into training set"
    );
    let mut hasher = Sha256::new();
    let mut vectors: Vec<&[f64]> = Vec::new();
    for &id in &fold.train {
        let b = corpus
            .get(id)
            .ok_or_else(|| Error::Config(format!("no data for bearing {id}")))?;
        hasher.update([id.dataset, id.bearing]);
        hasher.update((b.filtered.len() as u64).to_le_bytes());
        for x in &b.filtered {
            for v in x {
                hasher.update(v.to_le_bytes());
            }
            vectors.push(x);
        }
    }
    let train_cfg = config.fold_train_config(bearing_index(fold.test));
    let outcome = train(&vectors, &train_cfg)?;
    if let (Some(first), Some(last)) = (outcome.batch_losses.first(), outcome.batch_losses.last()) {
        info!(
            "fold {}: autoencoder loss {first:.4e} -> {last:.4e}",
            fold.test
        );
    }
    Ok(outcome.params.encoder(EncoderProvenance {
        init_seed: train_cfg.init_seed,
        shuffle_seed: train_cfg.shuffle_seed,
        train_set_hash: hasher.finalize().into(),
    }))
}

pub fn feature_extractor(
    fold: &LooFold,
    corpus: &Corpus,
    config: &PipelineConfig,
) -> Result<FeatureExtractor> {
    Ok(match config.feature_mode {
        FeatureMode::Auto => FeatureExtractor::Auto(train_fold_encoder(fold, corpus, config)?),
        FeatureMode::Handcrafted => FeatureExtractor::Handcrafted,
    })
}

/// Online train-then-infer pass over one bearing's whole life.
pub fn run_bearing(
    bearing: &BearingData,
    extractor: &FeatureExtractor,
    config: &PipelineConfig,
    oselm_seed: u64,
) -> Result<OnlineRun> {
    let features = extractor.features_of(bearing)?;
    let model = config.oselm.build(extractor.n_in(), oselm_seed)?;
    run_online(&bearing.id.to_string(), &features, model)
}

fn calibration_point(run: &OnlineRun, truth: GroundTruth) -> CalibrationPoint {
    CalibrationPoint {
        mean: run.stats.mean,
        std: run.stats.std(),
        max_deviation: run.max_inference_deviation(),
        faulty: truth.is_faulty(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPoint {
    pub bearing: BearingId,
    #[serde(flatten)]
    pub point: CalibrationPoint,
}

/// Runs the online pipeline on each training bearing and picks the `K` that
/// best separates them.
pub fn calibrate_fold_k(
    fold: &LooFold,
    corpus: &Corpus,
    extractor: &FeatureExtractor,
    config: &PipelineConfig,
) -> Result<(KCalibration, Vec<NamedPoint>)> {
    let points = fold
        .train
        .iter()
        .map(|&id| {
            let b = corpus
                .get(id)
                .ok_or_else(|| Error::Config(format!("no data for bearing {id}")))?;
            let run = run_bearing(b, extractor, config, config.oselm_seed(fold.test))?;
            Ok(NamedPoint {
                bearing: id,
                point: calibration_point(&run, b.truth),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let plain: Vec<CalibrationPoint> = points.iter().map(|p| p.point).collect();
    Ok((calibrate_k(&plain, &config.k_grid)?, points))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub encoder_training_s: f64,
    pub calibration_s: f64,
    pub test_stream_s: f64,
    /// Mean wall time per inference-phase sample (feature extraction excluded).
    pub inference_per_sample_us: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub test: BearingId,
    pub ground_truth: GroundTruth,
    pub feature_mode: FeatureMode,
    pub encoder: Option<EncoderProvenance>,
    pub convergence_length: usize,
    pub samples: usize,
    pub mu_t: f64,
    pub sigma_t: f64,
    pub k: f64,
    pub k_calibration: Option<KCalibration>,
    pub verdict: BearingVerdict,
    pub correct: bool,
    pub calibration_points: Vec<NamedPoint>,
    #[serde(skip)]
    pub records: Vec<SampleRecord>,
    #[serde(skip)]
    pub timings: StageTimings,
    #[serde(skip)]
    pub encoder_model: Option<Encoder>,
    #[serde(skip)]
    pub oselm_model: Option<OselmModel>,
}

impl FoldReport {
    /// This bearing's own stats, for the accuracy-vs-K sweep.
    pub fn test_point(&self) -> CalibrationPoint {
        CalibrationPoint {
            mean: self.mu_t,
            std: self.sigma_t,
            max_deviation: self.verdict.max_deviation,
            faulty: self.ground_truth.is_faulty(),
        }
    }
}

pub fn run_fold(fold: &LooFold, corpus: &Corpus, config: &PipelineConfig) -> Result<FoldReport> {
    config.validate()?;
    let wrap = |e: Error| Error::Fold {
        fold: fold.test.to_string(),
        source: Box::new(e),
    };
    let test = corpus
        .get(fold.test)
        .ok_or_else(|| wrap(Error::Config("no data for test bearing".into())))?;

    let t0 = Instant::now();
    let extractor = feature_extractor(fold, corpus, config).map_err(wrap)?;
    let t1 = Instant::now();

    let (k, k_calibration, calibration_points) = match config.fixed_k {
        Some(k) => (k, None, Vec::new()),
        None => {
            let (cal, pts) = calibrate_fold_k(fold, corpus, &extractor, config).map_err(wrap)?;
            info!(
                "fold {}: K* = {} (plateau {:?}, train accuracy {}%)",
                fold.test, cal.k, cal.plateau, cal.accuracy
            );
            (cal.k, Some(cal), pts)
        }
    };
    let t2 = Instant::now();

    let run = run_bearing(test, &extractor, config, config.oselm_seed(fold.test)).map_err(wrap)?;
    let t3 = Instant::now();
    let thr = threshold(&run.stats, k).map_err(wrap)?;
    let inference = run.inference_deviations();
    let verdict = bearing_verdict(&inference, thr.t, run.convergence_length).map_err(wrap)?;
    let correct = (verdict.state == BearingState::Faulty) == test.truth.is_faulty();
    info!(
        "fold {}: converged at {}/{}, T = {:.4e}, max dev = {:.4e} -> {} ({})",
        fold.test,
        run.convergence_length,
        test.len(),
        thr.t,
        verdict.max_deviation,
        verdict.state,
        if correct { "correct" } else { "WRONG" }
    );

    let inference_per_sample_us = {
        let feats = extractor.features_of(test).map_err(wrap)?;
        let start = Instant::now();
        for x in &feats[run.convergence_length..] {
            run.model.predict(x).map_err(wrap)?;
        }
        start.elapsed().as_secs_f64() * 1e6 / inference.len().max(1) as f64
    };

    Ok(FoldReport {
        test: fold.test,
        ground_truth: test.truth,
        feature_mode: config.feature_mode,
        encoder: match &extractor {
            FeatureExtractor::Auto(enc) => Some(enc.provenance),
            FeatureExtractor::Handcrafted => None,
        },
        convergence_length: run.convergence_length,
        samples: test.len(),
        mu_t: run.stats.mean,
        sigma_t: run.stats.std(),
        k,
        k_calibration,
        verdict,
        correct,
        calibration_points,
        records: run.records,
        timings: StageTimings {
            encoder_training_s: (t1 - t0).as_secs_f64(),
            calibration_s: (t2 - t1).as_secs_f64(),
            test_stream_s: (t3 - t2).as_secs_f64(),
            inference_per_sample_us,
        },
        encoder_model: match extractor {
            FeatureExtractor::Auto(enc) => Some(enc),
            FeatureExtractor::Handcrafted => None,
        },
        oselm_model: Some(run.model),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub feature_mode: FeatureMode,
    pub master_seed: u64,
    pub folds: Vec<FoldReport>,
    pub correct: usize,
    /// Fraction of folds whose verdict matches ground truth.
    pub accuracy: f64,
    pub mean_convergence_length: f64,
    /// `(K, accuracy %)` over the grid, each bearing judged on its own stats.
    pub accuracy_vs_k: Vec<(f64, f64)>,
}

impl RunReport {
    pub fn from_folds(config: &PipelineConfig, folds: Vec<FoldReport>) -> Self {
        let correct = folds.iter().filter(|f| f.correct).count();
        let points: Vec<CalibrationPoint> = folds.iter().map(FoldReport::test_point).collect();
        let n = folds.len().max(1) as f64;
        Self {
            feature_mode: config.feature_mode,
            master_seed: config.master_seed,
            correct,
            accuracy: correct as f64 / n,
            mean_convergence_length: folds
                .iter()
                .map(|f| f.convergence_length as f64)
                .sum::<f64>()
                / n,
            accuracy_vs_k: accuracy_vs_k(&points, &config.k_grid),
            folds,
        }
    }
}

/// All twelve folds, in parallel. Results are ordered like `folds`.
pub fn run_all(corpus: &Corpus, folds: &[LooFold], config: &PipelineConfig) -> Result<RunReport> {
    config.validate()?;
    let reports = folds
        .par_iter()
        .map(|fold| run_fold(fold, corpus, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport::from_folds(config, reports))
}
