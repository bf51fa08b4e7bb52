//! Layer-wise relative weight change (RWC) over per-epoch weight snapshots.
//!
//! The pieces compose into one workflow: [`trainer`] produces a run directory
//! of `.lws` [`snapshot`]s indexed by a [`manifest`]; [`rwc`] measures each
//! layer's change per epoch; [`grouping`] folds layers into blocks or
//! early/middle/later groups; [`aggregate`] averages runs across seeds;
//! [`trend`] reduces group curves to ordering statistics; [`report`] writes
//! CSV, JSON and SVG.

pub mod aggregate;
pub mod filter;
pub mod grouping;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod rwc;
pub mod snapshot;
pub mod trainer;
pub mod trend;

pub use aggregate::{aggregate_runs, aggregate_seeds, AggregateError, AggregateSeries};
pub use filter::NameFilter;
pub use grouping::{compile_group_map, group_series, preset, GroupRule, LayerGroupMap, Preset, Weighting};
pub use manifest::{list_epoch_paths, load_manifest, read_manifest, RunManifest};
pub use pipeline::{analyze_run, AnalysisOptions, Grouping};
pub use rwc::{rwc_layer_series, rwc_pair, rwc_run, RwcMode, RwcSeries};
pub use snapshot::{read_snapshot, write_snapshot, Dtype, TensorData, TensorSnapshot};
pub use trend::{dominance, mean_over_window, trend_report, TrendReport, Window, WindowLength};
