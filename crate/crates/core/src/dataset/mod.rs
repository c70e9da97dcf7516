//! Bearing identities, ground truth, leave-one-out folds and the data sources
//! (IMS snapshot files or the synthetic generator).

mod ims;
mod manifest;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ims::{
    extract_bearing_series, parse_snapshot, scan_dataset, write_snapshot, RawSnapshot,
    SnapshotFormat, SnapshotRef, IMS_ROWS, TIMESTAMP_FORMAT,
};
pub use manifest::{DatasetManifest, DatasetRoot, ManifestEntry};
pub use synth::{synth_bearing, synthetic_timestamp, SyntheticConfig, SyntheticSnapshots};

/// A bearing in the IMS collection: dataset 1..=3, bearing 1..=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BearingId {
    pub dataset: u8,
    pub bearing: u8,
}

impl BearingId {
    pub fn new(dataset: u8, bearing: u8) -> Result<Self> {
        if !(1..=3).contains(&dataset) || !(1..=4).contains(&bearing) {
            return Err(Error::SelectorMismatch { dataset, bearing });
        }
        Ok(Self { dataset, bearing })
    }

    /// All twelve bearings in dataset-major order.
    pub fn all() -> Vec<BearingId> {
        (1..=3)
            .flat_map(|d| {
                (1..=4).map(move |b| BearingId {
                    dataset: d,
                    bearing: b,
                })
            })
            .collect()
    }
}

impl fmt::Display for BearingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}B{}", self.dataset, self.bearing)
    }
}

impl FromStr for BearingId {
    type Err = Error;

    /// Accepts `1.3` or `D1B3`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse bearing id {s:?} (use 1.3 or D1B3)"));
        let (d, b) = if let Some(rest) = s.strip_prefix(['D', 'd']) {
            rest.split_once(['B', 'b']).ok_or_else(bad)?
        } else {
            s.split_once('.').ok_or_else(bad)?
        };
        let d = d.trim().parse::<u8>().map_err(|_| bad())?;
        let b = b.trim().parse::<u8>().map_err(|_| bad())?;
        BearingId::new(d, b)
    }
}

/// Which accelerometer columns of a snapshot belong to a bearing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelPolicy {
    /// Dataset 1: X and Y accelerometers, columns `2k-2` and `2k-1`.
    DualAxis,
    /// Datasets 2 and 3: one X accelerometer, column `k-1`.
    SingleAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BearingSelector {
    pub id: BearingId,
    pub channel_policy: ChannelPolicy,
}

impl BearingSelector {
    pub fn new(id: BearingId) -> Self {
        let channel_policy = if id.dataset == 1 {
            ChannelPolicy::DualAxis
        } else {
            ChannelPolicy::SingleAxis
        };
        Self { id, channel_policy }
    }

    /// Channel count of the snapshot files this bearing lives in.
    pub fn dataset_channels(&self) -> usize {
        match self.channel_policy {
            ChannelPolicy::DualAxis => 8,
            ChannelPolicy::SingleAxis => 4,
        }
    }

    /// Every column mapped to this bearing.
    pub fn columns(&self) -> Vec<usize> {
        let k = self.id.bearing as usize;
        match self.channel_policy {
            ChannelPolicy::DualAxis => vec![2 * k - 2, 2 * k - 1],
            ChannelPolicy::SingleAxis => vec![k - 1],
        }
    }

    /// The X-axis column used as the bearing's vibration series.
    pub fn series_column(&self) -> usize {
        self.columns()[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundTruth {
    Healthy,
    InnerRace,
    RollerElement,
    OuterRace,
}

impl GroundTruth {
    pub fn is_faulty(self) -> bool {
        self != GroundTruth::Healthy
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroundTruth::Healthy => "healthy",
            GroundTruth::InnerRace => "inner-race",
            GroundTruth::RollerElement => "roller-element",
            GroundTruth::OuterRace => "outer-race",
        }
    }

    /// Condition column of the IMS dataset description.
    pub fn reference(id: BearingId) -> GroundTruth {
        match (id.dataset, id.bearing) {
            (1, 3) => GroundTruth::InnerRace,
            (1, 4) => GroundTruth::RollerElement,
            (2, 1) | (3, 3) => GroundTruth::OuterRace,
            _ => GroundTruth::Healthy,
        }
    }
}

impl fmt::Display for GroundTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroundTruth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "healthy" | "no defect" => Ok(GroundTruth::Healthy),
            "inner-race" => Ok(GroundTruth::InnerRace),
            "roller-element" => Ok(GroundTruth::RollerElement),
            "outer-race" => Ok(GroundTruth::OuterRace),
            other => Err(Error::Manifest(format!("unknown ground truth {other:?}"))),
        }
    }
}

/// One leave-one-out split: train on eleven bearings, test on the twelfth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LooFold {
    pub test: BearingId,
    pub train: Vec<BearingId>,
}

/// Fold `i` tests manifest entry `i` and trains on the rest, in manifest order.
pub fn make_loo_folds(manifest: &DatasetManifest) -> Result<Vec<LooFold>> {
    manifest.validate_entries()?;
    let ids: Vec<BearingId> = manifest.entries.iter().map(|e| e.selector.id).collect();
    Ok(ids
        .iter()
        .map(|&test| LooFold {
            test,
            train: ids.iter().copied().filter(|&b| b != test).collect(),
        })
        .collect())
}
