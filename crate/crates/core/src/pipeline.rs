//! Single-run analysis: manifest → per-layer RWC → optional grouping.

use std::path::Path;

use indexmap::IndexMap;
use thiserror::Error;

use crate::filter::NameFilter;
use crate::grouping::{compile_group_map, group_series, preset, GroupRule, GroupingError, Preset, Weighting};
use crate::manifest::{load_manifest, ManifestError, RunManifest};
use crate::rwc::{parameter_counts, rwc_run, RwcError, RwcMode, RwcSeries};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Rwc(#[from] RwcError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
}

/// Where group rules come from, if anywhere.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Grouping {
    /// One output series per selected layer.
    #[default]
    PerLayer,
    Preset(Preset),
    Rules(Vec<GroupRule>),
}

impl Grouping {
    pub fn rules(&self) -> Option<Vec<GroupRule>> {
        match self {
            Grouping::PerLayer => None,
            Grouping::Preset(p) => Some(preset(*p)),
            Grouping::Rules(r) => Some(r.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisOptions {
    pub mode: RwcMode,
    pub filter: NameFilter,
    pub grouping: Grouping,
    pub weighting: Weighting,
}

#[derive(Debug, Clone)]
pub struct RunAnalysis {
    pub manifest: RunManifest,
    /// Per-layer or per-group series, in layer/rule order.
    pub series: IndexMap<String, RwcSeries>,
}

pub fn analyze_run(run_directory: &Path, options: &AnalysisOptions) -> Result<RunAnalysis, PipelineError> {
    let manifest = load_manifest(run_directory)?;
    let series = analyze_loaded_run(run_directory, &manifest, options)?;
    Ok(RunAnalysis { manifest, series })
}

pub fn analyze_loaded_run(
    run_directory: &Path,
    manifest: &RunManifest,
    options: &AnalysisOptions,
) -> Result<IndexMap<String, RwcSeries>, PipelineError> {
    let per_layer = rwc_run(run_directory, manifest, &options.filter, options.mode)?;
    let Some(rules) = options.grouping.rules() else {
        return Ok(per_layer);
    };
    let names: Vec<String> = per_layer.keys().cloned().collect();
    let map = compile_group_map(&rules, &names)?;
    let counts = match options.weighting {
        Weighting::Unweighted => IndexMap::new(),
        Weighting::ParamCount => parameter_counts(run_directory, manifest)?,
    };
    Ok(group_series(&per_layer, &map, options.weighting, &counts)?)
}
