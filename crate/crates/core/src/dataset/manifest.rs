use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::{BearingId, BearingSelector, GroundTruth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRoot {
    pub dataset: u8,
    /// Relative paths resolve against the data root given at load time.
    pub dir: PathBuf,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub selector: BearingSelector,
    /// Snapshot files found on disk; zero until the dataset has been scanned.
    pub sample_count: usize,
    pub truth: GroundTruth,
}

/// Where the three IMS datasets live and what condition each bearing ended in.
///
/// Text form, one `key = value` per line, `#` comments:
///
/// ```text
/// dataset.1.root = 1st_test
/// dataset.1.channels = 8
/// bearing.1.3 = inner-race
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub roots: Vec<DatasetRoot>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// The public IMS layout with the reference ground truth.
    pub fn ims() -> Self {
        let roots = vec![
            DatasetRoot {
                dataset: 1,
                dir: "1st_test".into(),
                channels: 8,
            },
            DatasetRoot {
                dataset: 2,
                dir: "2nd_test".into(),
                channels: 4,
            },
            DatasetRoot {
                dataset: 3,
                dir: "3rd_test".into(),
                channels: 4,
            },
        ];
        let entries = BearingId::all()
            .into_iter()
            .map(|id| ManifestEntry {
                selector: BearingSelector::new(id),
                sample_count: 0,
                truth: GroundTruth::reference(id),
            })
            .collect();
        Self { roots, entries }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut manifest = Self {
            roots: Vec::new(),
            entries: Vec::new(),
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Manifest(format!("line {}: {msg}: {raw:?}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value"))?;
            let parts: Vec<&str> = key.trim().split('.').collect();
            let value = value.trim();
            match parts.as_slice() {
                ["dataset", d, field] => {
                    let dataset: u8 = d.parse().map_err(|_| err("bad dataset number"))?;
                    if !(1..=3).contains(&dataset) {
                        return Err(err("dataset must be 1..=3"));
                    }
                    let idx = match manifest.roots.iter().position(|r| r.dataset == dataset) {
                        Some(i) => i,
                        None => {
                            manifest.roots.push(DatasetRoot {
                                dataset,
                                dir: PathBuf::new(),
                                channels: if dataset == 1 { 8 } else { 4 },
                            });
                            manifest.roots.len() - 1
                        }
                    };
                    match *field {
                        "root" => manifest.roots[idx].dir = PathBuf::from(value),
                        "channels" => {
                            manifest.roots[idx].channels =
                                value.parse().map_err(|_| err("bad channel count"))?
                        }
                        _ => return Err(err("unknown dataset field")),
                    }
                }
                ["bearing", d, b] => {
                    let id: BearingId = format!("{d}.{b}").parse()?;
                    manifest.entries.push(ManifestEntry {
                        selector: BearingSelector::new(id),
                        sample_count: 0,
                        truth: value.parse()?,
                    });
                }
                _ => return Err(err("unknown key")),
            }
        }
        for root in &manifest.roots {
            let expected = if root.dataset == 1 { 8 } else { 4 };
            if root.channels != expected {
                return Err(Error::Manifest(format!(
                    "dataset {} must have {expected} channels, manifest says {}",
                    root.dataset, root.channels
                )));
            }
        }
        manifest.validate_entries()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.roots {
            out.push_str(&format!(
                "dataset.{}.root = {}\n",
                r.dataset,
                r.dir.display()
            ));
            out.push_str(&format!(
                "dataset.{}.channels = {}\n",
                r.dataset, r.channels
            ));
        }
        for e in &self.entries {
            let id = e.selector.id;
            out.push_str(&format!(
                "bearing.{}.{} = {}\n",
                id.dataset, id.bearing, e.truth
            ));
        }
        out
    }

    /// Twelve distinct bearings whose ground truth agrees with the IMS description.
    pub fn validate_entries(&self) -> Result<()> {
        if self.entries.len() != 12 {
            return Err(Error::Manifest(format!(
                "expected 12 bearings, found {}",
                self.entries.len()
            )));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            let id = e.selector.id;
            if !seen.insert(id) {
                return Err(Error::Manifest(format!("duplicate bearing {id}")));
            }
            if e.truth != GroundTruth::reference(id) {
                return Err(Error::Manifest(format!(
                    "bearing {id} marked {}, reference condition is {}",
                    e.truth,
                    GroundTruth::reference(id)
                )));
            }
        }
        Ok(())
    }

    pub fn truth(&self, id: BearingId) -> Option<GroundTruth> {
        self.entries
            .iter()
            .find(|e| e.selector.id == id)
            .map(|e| e.truth)
    }

    pub fn dataset_dir(&self, data_root: &Path, dataset: u8) -> Result<PathBuf> {
        let root = self
            .roots
            .iter()
            .find(|r| r.dataset == dataset)
            .ok_or_else(|| Error::Manifest(format!("no root declared for dataset {dataset}")))?;
        Ok(data_root.join(&root.dir))
    }
}
