//! Relative weight change between consecutive epoch snapshots.
//!
//! For one layer with weights `w` at epochs `t-1` and `t`:
//!
//! * [`RwcMode::NormRatio`]: `|w_t - w_{t-1}|_1 / |w_{t-1}|_1`
//! * [`RwcMode::ElementMean`]: mean over elements of `|w_t,i - w_{t-1},i| / |w_{t-1},i|`,
//!   skipping elements whose baseline magnitude is below [`DEGENERATE_EPSILON`].
//!
//! All arithmetic is `f64`, summed sequentially in row-major order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::NameFilter;
use crate::manifest::{list_epoch_paths, ManifestError, RunManifest};
use crate::snapshot::{load_snapshot, FormatError, TensorData, TensorSnapshot};

/// Baseline magnitudes below this are treated as zero.
pub const DEGENERATE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RwcMode {
    #[default]
    NormRatio,
    ElementMean,
}

impl RwcMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RwcMode::NormRatio => "norm",
            RwcMode::ElementMean => "element",
        }
    }
}

impl fmt::Display for RwcMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RwcMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "norm" => Ok(RwcMode::NormRatio),
            "element" => Ok(RwcMode::ElementMean),
            other => Err(format!("unknown RWC mode `{other}` (expected `norm` or `element`)")),
        }
    }
}

/// Per-transition RWC values for one layer or group. `values[t - 1]` is the
/// change from snapshot `t - 1` to snapshot `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwcSeries {
    pub label: String,
    pub mode: RwcMode,
    pub values: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum RwcError {
    #[error("shape mismatch: previous {previous:?}, current {current:?}")]
    ShapeMismatch {
        previous: Vec<usize>,
        current: Vec<usize>,
    },
    #[error("degenerate baseline: previous weights have (near) zero magnitude")]
    DegenerateBaseline,
    #[error("need at least 2 snapshots to measure change, found {0}")]
    InsufficientSnapshots(usize),
    #[error("parameter `{name}` missing from epoch {epoch}")]
    ParameterMissing { name: String, epoch: u64 },
    #[error("parameter `{name}` changes shape at epoch {epoch}: {expected:?} -> {found:?}")]
    ShapeDrift {
        name: String,
        epoch: u64,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("`{name}` at transition {transition}")]
    AtTransition {
        name: String,
        transition: usize,
        #[source]
        source: Box<RwcError>,
    },
    #[error("filter `{filter}` selects no parameters")]
    EmptySelection { filter: String },
    #[error("reading {}", path.display())]
    Snapshot {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// RWC of one tensor between two consecutive snapshots.
pub fn rwc_pair(previous: &TensorData, current: &TensorData, mode: RwcMode) -> Result<f64, RwcError> {
    if previous.shape() != current.shape() {
        return Err(RwcError::ShapeMismatch {
            previous: previous.shape().to_vec(),
            current: current.shape().to_vec(),
        });
    }
    let pairs = previous.iter_f64().zip(current.iter_f64());
    match mode {
        RwcMode::NormRatio => {
            let (mut moved, mut baseline) = (0.0f64, 0.0f64);
            for (p, c) in pairs {
                moved += (c - p).abs();
                baseline += p.abs();
            }
            if baseline < DEGENERATE_EPSILON {
                return Err(RwcError::DegenerateBaseline);
            }
            Ok(moved / baseline)
        }
        RwcMode::ElementMean => {
            let (mut total, mut counted) = (0.0f64, 0usize);
            for (p, c) in pairs {
                let base = p.abs();
                if base >= DEGENERATE_EPSILON {
                    total += (c - p).abs() / base;
                    counted += 1;
                }
            }
            if counted == 0 {
                return Err(RwcError::DegenerateBaseline);
            }
            Ok(total / counted as f64)
        }
    }
}

fn load(path: &Path) -> Result<TensorSnapshot, RwcError> {
    load_snapshot(path).map_err(|source| RwcError::Snapshot {
        path: path.to_owned(),
        source,
    })
}

fn take_tensor<'a>(snapshot: &'a TensorSnapshot, name: &str, epoch: u64) -> Result<&'a TensorData, RwcError> {
    snapshot.get(name).ok_or_else(|| RwcError::ParameterMissing {
        name: name.to_owned(),
        epoch,
    })
}

fn transition_value(
    name: &str,
    transition: usize,
    epoch: u64,
    previous: &TensorData,
    current: &TensorData,
    mode: RwcMode,
) -> Result<f64, RwcError> {
    if previous.shape() != current.shape() {
        return Err(RwcError::ShapeDrift {
            name: name.to_owned(),
            epoch,
            expected: previous.shape().to_vec(),
            found: current.shape().to_vec(),
        });
    }
    rwc_pair(previous, current, mode).map_err(|e| RwcError::AtTransition {
        name: name.to_owned(),
        transition,
        source: Box::new(e),
    })
}

/// RWC series of one parameter, streaming through the epoch snapshots in order.
pub fn rwc_layer_series(
    epoch_paths: &[(u64, PathBuf)],
    parameter_name: &str,
    mode: RwcMode,
) -> Result<RwcSeries, RwcError> {
    if epoch_paths.len() < 2 {
        return Err(RwcError::InsufficientSnapshots(epoch_paths.len()));
    }
    let (first_epoch, first_path) = &epoch_paths[0];
    let mut previous = take_tensor(&load(first_path)?, parameter_name, *first_epoch)?.clone();
    let mut values = Vec::with_capacity(epoch_paths.len() - 1);
    for (transition, (epoch, path)) in epoch_paths.iter().enumerate().skip(1) {
        let current = take_tensor(&load(path)?, parameter_name, *epoch)?.clone();
        values.push(transition_value(parameter_name, transition, *epoch, &previous, &current, mode)?);
        previous = current;
    }
    Ok(RwcSeries {
        label: parameter_name.to_owned(),
        mode,
        values,
    })
}

/// RWC series for every parameter of a run selected by `filter`, keyed and
/// ordered by the header order of the run's first snapshot.
///
/// Each snapshot is read once; at most two are resident. Layers within a
/// transition are evaluated in parallel on the current rayon pool.
pub fn rwc_run(
    run_directory: impl AsRef<Path>,
    manifest: &RunManifest,
    filter: &NameFilter,
    mode: RwcMode,
) -> Result<IndexMap<String, RwcSeries>, RwcError> {
    let epoch_paths = list_epoch_paths(run_directory, manifest)?;
    if epoch_paths.len() < 2 {
        return Err(RwcError::InsufficientSnapshots(epoch_paths.len()));
    }
    let mut previous = load(&epoch_paths[0].1)?;
    let names: Vec<String> = previous
        .names()
        .filter(|n| filter.matches(n))
        .map(str::to_owned)
        .collect();
    if names.is_empty() {
        return Err(RwcError::EmptySelection {
            filter: filter.to_string(),
        });
    }

    let mut series: IndexMap<String, RwcSeries> = names
        .iter()
        .map(|n| {
            let s = RwcSeries {
                label: n.clone(),
                mode,
                values: Vec::with_capacity(epoch_paths.len() - 1),
            };
            (n.clone(), s)
        })
        .collect();

    for (transition, (epoch, path)) in epoch_paths.iter().enumerate().skip(1) {
        let current = load(path)?;
        let step: Vec<f64> = names
            .par_iter()
            .map(|name| {
                let before = previous.get(name).expect("selected names exist in the previous snapshot");
                let after = take_tensor(&current, name, *epoch)?;
                transition_value(name, transition, *epoch, before, after, mode)
            })
            .collect::<Result<_, _>>()?;
        for (s, value) in series.values_mut().zip(step) {
            s.values.push(value);
        }
        previous = current;
    }
    Ok(series)
}

/// Element counts of every parameter in the run's first snapshot.
pub fn parameter_counts(
    run_directory: impl AsRef<Path>,
    manifest: &RunManifest,
) -> Result<IndexMap<String, usize>, RwcError> {
    let epoch = manifest.epoch_indices().next().unwrap_or(0);
    let path = run_directory
        .as_ref()
        .join(manifest.snapshot_file_name(epoch));
    let snapshot = load(&path)?;
    Ok(snapshot.iter().map(|(n, t)| (n.to_owned(), t.len())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(values: &[f64]) -> TensorData {
        TensorData::from_f64(vec![values.len()], values.to_vec()).unwrap()
    }

    #[test]
    fn identical_tensors_give_zero() {
        let a = TensorData::from_f64(vec![2, 3], vec![0.5, -1.0, 2.0, 3.0, -4.0, 1e-3]).unwrap();
        assert_eq!(rwc_pair(&a, &a, RwcMode::NormRatio).unwrap(), 0.0);
        assert_eq!(rwc_pair(&a, &a, RwcMode::ElementMean).unwrap(), 0.0);
    }

    #[test]
    fn hand_fixture_norm_ratio() {
        let v = rwc_pair(&t(&[1.0, -2.0, 3.0]), &t(&[1.5, -1.0, 3.0]), RwcMode::NormRatio).unwrap();
        assert_eq!(v, 0.25);
    }

    #[test]
    fn modes_disagree_on_uneven_changes() {
        let (p, c) = (t(&[1.0, 4.0]), t(&[2.0, 2.0]));
        assert!((rwc_pair(&p, &c, RwcMode::NormRatio).unwrap() - 0.6).abs() <= 1e-12);
        assert!((rwc_pair(&p, &c, RwcMode::ElementMean).unwrap() - 0.75).abs() <= 1e-12);
    }

    #[test]
    fn zero_baseline_is_degenerate() {
        let (p, c) = (t(&[0.0, 0.0]), t(&[1.0, 1.0]));
        assert!(matches!(rwc_pair(&p, &c, RwcMode::NormRatio), Err(RwcError::DegenerateBaseline)));
        assert!(matches!(rwc_pair(&p, &c, RwcMode::ElementMean), Err(RwcError::DegenerateBaseline)));
    }

    #[test]
    fn element_mean_skips_zero_baselines() {
        let v = rwc_pair(&t(&[0.0, 2.0]), &t(&[5.0, 3.0]), RwcMode::ElementMean).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn shape_mismatch() {
        let a = TensorData::from_f64(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let b = TensorData::from_f64(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(rwc_pair(&a, &b, RwcMode::NormRatio), Err(RwcError::ShapeMismatch { .. })));
    }

    #[test]
    fn mixed_precision_is_compared_in_f64() {
        let a = TensorData::from_f32(vec![2], vec![1.0, 3.0]).unwrap();
        let b = TensorData::from_f64(vec![2], vec![2.0, 3.0]).unwrap();
        assert_eq!(rwc_pair(&a, &b, RwcMode::NormRatio).unwrap(), 0.25);
    }

    #[test]
    fn mode_names() {
        assert_eq!("norm".parse::<RwcMode>().unwrap(), RwcMode::NormRatio);
        assert_eq!("element".parse::<RwcMode>().unwrap(), RwcMode::ElementMean);
        assert!("l2".parse::<RwcMode>().is_err());
        assert_eq!(RwcMode::default(), RwcMode::NormRatio);
    }
}
