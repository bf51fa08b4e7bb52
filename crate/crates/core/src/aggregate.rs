//! Averaging aligned RWC curves across runs that differ only in seed.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grouping::anchored_mean;
use crate::manifest::{load_manifest, RunManifest};
use crate::pipeline::{analyze_loaded_run, AnalysisOptions, PipelineError};
use crate::rwc::RwcSeries;

/// Mean and sample standard deviation per transition across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub label: String,
    pub n: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Sorted lexicographically.
    pub source_run_ids: Vec<String>,
}

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("{series} series but {run_ids} run ids")]
    RunIdCountMismatch { series: usize, run_ids: usize },
    #[error("run id `{0}` appears more than once")]
    DuplicateRunId(String),
    #[error("label mismatch: expected `{expected}`, found `{found}`")]
    LabelMismatch { expected: String, found: String },
    #[error("`{label}`: series length {found} differs from {expected}")]
    LengthMismatch {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("`{label}`: series computed with different RWC modes")]
    ModeMismatch { label: String },
    #[error("run `{run_id}` has {found} epochs, expected {expected}")]
    EpochCountMismatch {
        run_id: String,
        expected: u64,
        found: u64,
    },
    #[error("run `{run_id}` has architecture `{found}`, expected `{expected}`")]
    ArchitectureMismatch {
        run_id: String,
        expected: String,
        found: String,
    },
    #[error("run `{run_id}` produced a different set of labels (`{label}` unmatched)")]
    LabelSetMismatch { run_id: String, label: String },
    #[error("run `{run}`")]
    Run {
        run: String,
        #[source]
        source: PipelineError,
    },
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Aggregates one label's series across seeds. Inputs are reordered by run
/// id first, so the result does not depend on the order given.
pub fn aggregate_seeds(series_per_seed: &[RwcSeries], run_ids: &[String]) -> Result<AggregateSeries, AggregateError> {
    if series_per_seed.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    if series_per_seed.len() != run_ids.len() {
        return Err(AggregateError::RunIdCountMismatch {
            series: series_per_seed.len(),
            run_ids: run_ids.len(),
        });
    }
    let mut seen = HashSet::new();
    if let Some(dup) = run_ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(AggregateError::DuplicateRunId(dup.clone()));
    }

    let first = &series_per_seed[0];
    for s in &series_per_seed[1..] {
        if s.label != first.label {
            return Err(AggregateError::LabelMismatch {
                expected: first.label.clone(),
                found: s.label.clone(),
            });
        }
        if s.mode != first.mode {
            return Err(AggregateError::ModeMismatch {
                label: first.label.clone(),
            });
        }
        if s.values.len() != first.values.len() {
            return Err(AggregateError::LengthMismatch {
                label: first.label.clone(),
                expected: first.values.len(),
                found: s.values.len(),
            });
        }
    }

    let mut order: Vec<usize> = (0..run_ids.len()).collect();
    order.sort_by(|&a, &b| run_ids[a].cmp(&run_ids[b]));
    let n = order.len();
    let ones = vec![1.0; n];
    let mut column = vec![0.0; n];
    let transitions = first.values.len();
    let mut mean = Vec::with_capacity(transitions);
    let mut std = Vec::with_capacity(transitions);
    for t in 0..transitions {
        for (slot, &i) in column.iter_mut().zip(&order) {
            *slot = series_per_seed[i].values[t];
        }
        let m = anchored_mean(&column, &ones);
        mean.push(m);
        std.push(sample_std(&column, m));
    }
    Ok(AggregateSeries {
        label: first.label.clone(),
        n,
        mean,
        std,
        source_run_ids: order.iter().map(|&i| run_ids[i].clone()).collect(),
    })
}

/// Runs the single-run analysis on every directory and aggregates per label.
///
/// All runs must agree on epoch count and architecture and carry distinct run
/// ids. Runs are analyzed in parallel on the current rayon pool; the result is
/// keyed in the label order of the run with the smallest run id.
pub fn aggregate_runs(
    run_directories: &[PathBuf],
    options: &AnalysisOptions,
) -> Result<IndexMap<String, AggregateSeries>, AggregateError> {
    if run_directories.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    let mut runs: Vec<(RunManifest, &Path)> = run_directories
        .iter()
        .map(|dir| {
            load_manifest(dir)
                .map(|m| (m, dir.as_path()))
                .map_err(|e| AggregateError::Run {
                    run: dir.display().to_string(),
                    source: e.into(),
                })
        })
        .collect::<Result<_, _>>()?;
    runs.sort_by(|a, b| a.0.run_id.cmp(&b.0.run_id));

    let reference = runs[0].0.clone();
    for pair in runs.windows(2) {
        if pair[0].0.run_id == pair[1].0.run_id {
            return Err(AggregateError::DuplicateRunId(pair[1].0.run_id.clone()));
        }
    }
    for (m, _) in &runs[1..] {
        if m.epochs != reference.epochs {
            return Err(AggregateError::EpochCountMismatch {
                run_id: m.run_id.clone(),
                expected: reference.epochs,
                found: m.epochs,
            });
        }
        if m.architecture != reference.architecture {
            return Err(AggregateError::ArchitectureMismatch {
                run_id: m.run_id.clone(),
                expected: reference.architecture.clone(),
                found: m.architecture.clone(),
            });
        }
    }

    let analyzed: Vec<IndexMap<String, RwcSeries>> = runs
        .par_iter()
        .map(|(manifest, dir)| {
            analyze_loaded_run(dir, manifest, options).map_err(|source| AggregateError::Run {
                run: manifest.run_id.clone(),
                source,
            })
        })
        .collect::<Result<_, _>>()?;

    let labels: Vec<&String> = analyzed[0].keys().collect();
    for ((manifest, _), per_run) in runs.iter().zip(&analyzed).skip(1) {
        let mismatch = labels
            .iter()
            .find(|l| !per_run.contains_key(l.as_str()))
            .map(|l| l.to_string())
            .or_else(|| per_run.keys().find(|k| !analyzed[0].contains_key(*k)).cloned());
        if let Some(label) = mismatch {
            return Err(AggregateError::LabelSetMismatch {
                run_id: manifest.run_id.clone(),
                label,
            });
        }
    }

    let run_ids: Vec<String> = runs.iter().map(|(m, _)| m.run_id.clone()).collect();
    labels
        .into_iter()
        .map(|label| {
            let per_seed: Vec<RwcSeries> = analyzed.iter().map(|r| r[label].clone()).collect();
            aggregate_seeds(&per_seed, &run_ids).map(|agg| (label.clone(), agg))
        })
        .collect()
}
