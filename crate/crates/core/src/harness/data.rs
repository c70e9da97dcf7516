use std::path::Path;

use chrono::NaiveDateTime;
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::seeds::derive_seed;
use crate::dataset::{
    extract_bearing_series, parse_snapshot, scan_dataset, synthetic_timestamp, BearingId,
    BearingSelector, DatasetManifest, GroundTruth, SnapshotFormat, SyntheticConfig,
    SyntheticSnapshots,
};
use crate::error::{Error, Result};
use crate::features::{average_downsample_truncating, handcrafted_vector, HandcraftedVector};

/// Preprocessed snapshots of one bearing, in timestamp order.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingData {
    pub id: BearingId,
    pub truth: GroundTruth,
    /// 5-sample averages of the raw series (autoencoder input).
    pub filtered: Vec<Vec<f64>>,
    /// Handcrafted features of the raw series.
    pub handcrafted: Vec<HandcraftedVector>,
    /// Acquisition time of each snapshot.
    pub timestamps: Vec<NaiveDateTime>,
    /// Known fault onset (synthetic data only).
    pub fault_onset: Option<usize>,
}

impl BearingData {
    /// Snapshots get synthetic timestamps ten minutes apart.
    pub fn from_raw(id: BearingId, truth: GroundTruth, raw: &[Vec<f64>]) -> Result<Self> {
        let processed: Vec<(Vec<f64>, HandcraftedVector)> = raw
            .par_iter()
            .map(|r| preprocess(r))
            .collect::<Result<_>>()?;
        let (filtered, handcrafted) = processed.into_iter().unzip();
        Ok(Self {
            id,
            truth,
            filtered,
            handcrafted,
            timestamps: (0..raw.len()).map(synthetic_timestamp).collect(),
            fault_onset: None,
        })
    }

    pub fn len(&self) -> usize {
        self.filtered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }
}

/// Averaged vector and handcrafted features of one raw snapshot series.
pub fn preprocess(raw: &[f64]) -> Result<(Vec<f64>, HandcraftedVector)> {
    Ok((
        average_downsample_truncating(raw)?,
        handcrafted_vector(raw)?,
    ))
}

/// The twelve bearings, in manifest order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub bearings: Vec<BearingData>,
}

impl Corpus {
    pub fn get(&self, id: BearingId) -> Option<&BearingData> {
        self.bearings.iter().find(|b| b.id == id)
    }

    pub fn get_mut(&mut self, id: BearingId) -> Option<&mut BearingData> {
        self.bearings.iter_mut().find(|b| b.id == id)
    }

    pub fn manifest(&self) -> DatasetManifest {
        let mut m = DatasetManifest::ims();
        for e in &mut m.entries {
            e.sample_count = self.get(e.selector.id).map_or(0, |b| b.len());
        }
        m
    }

    /// Reads every snapshot of the three IMS datasets, keeping only the
    /// preprocessed X-axis series of each bearing.
    pub fn load_ims(data_root: &Path, manifest: &DatasetManifest) -> Result<Self> {
        manifest.validate_entries()?;
        let mut bearings = Vec::with_capacity(12);
        for root in &manifest.roots {
            let dir = manifest.dataset_dir(data_root, root.dataset)?;
            let refs = scan_dataset(&dir)?;
            info!(
                "dataset {}: {} snapshots in {}",
                root.dataset,
                refs.len(),
                dir.display()
            );
            let selectors: Vec<BearingSelector> = manifest
                .entries
                .iter()
                .filter(|e| e.selector.id.dataset == root.dataset)
                .map(|e| e.selector)
                .collect();
            let format = SnapshotFormat::ims(root.channels);
            let per_file: Vec<Vec<(Vec<f64>, HandcraftedVector)>> = refs
                .par_iter()
                .map(|r| {
                    let bytes = std::fs::read(&r.path).map_err(|e| Error::io(&r.path, e))?;
                    let name = r.path.file_name().unwrap_or_default().to_string_lossy();
                    let snap = parse_snapshot(&name, &bytes, format)?;
                    selectors
                        .iter()
                        .map(|sel| preprocess(&extract_bearing_series(&snap, sel)?))
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (k, sel) in selectors.iter().enumerate() {
                let (filtered, handcrafted) = per_file.iter().map(|row| row[k].clone()).unzip();
                bearings.push(BearingData {
                    id: sel.id,
                    truth: manifest
                        .truth(sel.id)
                        .expect("selector comes from manifest"),
                    filtered,
                    handcrafted,
                    timestamps: refs.iter().map(|r| r.timestamp).collect(),
                    fault_onset: None,
                });
            }
        }
        let order: Vec<BearingId> = manifest.entries.iter().map(|e| e.selector.id).collect();
        bearings.sort_by_key(|b| order.iter().position(|&id| id == b.id));
        Ok(Self { bearings })
    }

    pub fn synthetic(config: &SyntheticCorpusConfig) -> Result<Self> {
        let bearings = BearingId::all()
            .into_par_iter()
            .enumerate()
            .map(|(i, id)| {
                let truth = GroundTruth::reference(id);
                let cfg = config.bearing_config(i, truth.is_faulty());
                let (filtered, handcrafted): (Vec<Vec<f64>>, Vec<HandcraftedVector>) =
                    SyntheticSnapshots::new(&cfg)?
                        .map(|raw| preprocess(&raw))
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .unzip();
                Ok(BearingData {
                    id,
                    truth,
                    timestamps: (0..filtered.len()).map(synthetic_timestamp).collect(),
                    filtered,
                    handcrafted,
                    fault_onset: cfg.fault_onset,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bearings })
    }
}

/// A twelve-bearing synthetic stand-in for the IMS data, with the same
/// healthy/faulty split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusConfig {
    pub n_snapshots: usize,
    pub snapshot_len: usize,
    pub noise_sigma: f64,
    /// Impact amplitude at onset, in units of `noise_sigma`.
    pub impulse_sigmas: f64,
    /// Per-snapshot amplitude growth, in units of `noise_sigma`.
    pub growth_sigmas: f64,
    /// Onsets are spread over this fraction-of-life range.
    pub onset_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        Self {
            n_snapshots: 2000,
            snapshot_len: 8192,
            noise_sigma: 0.1,
            impulse_sigmas: 3.0,
            growth_sigmas: 0.01,
            onset_range: (0.5, 0.7),
            seed: 2024,
        }
    }
}

impl SyntheticCorpusConfig {
    /// Generator settings for bearing `index` (0..12). Faulty bearings get
    /// onsets evenly spaced over `onset_range`.
    pub fn bearing_config(&self, index: usize, faulty: bool) -> SyntheticConfig {
        let seed = derive_seed(self.seed, "synthetic-bearing", index as u64);
        let base = SyntheticConfig::healthy(self.n_snapshots, self.noise_sigma, seed)
            .with_snapshot_len(self.snapshot_len);
        if !faulty {
            return base;
        }
        let faulty_rank = BearingId::all()[..index]
            .iter()
            .filter(|&&id| GroundTruth::reference(id).is_faulty())
            .count();
        let (lo, hi) = self.onset_range;
        let frac = lo + (hi - lo) * faulty_rank as f64 / 3.0;
        let onset = (frac * self.n_snapshots as f64).round() as usize;
        base.with_fault(
            onset,
            self.impulse_sigmas * self.noise_sigma,
            self.growth_sigmas * self.noise_sigma,
        )
    }
}
