//! Output documents: long-format CSV, trend JSON, and SVG line plots.

mod tabular;
mod svg;

use thiserror::Error;

pub use self::tabular::{aggregate_to_csv, format_real, parse_curves_csv, series_to_csv, CsvKind, CurveTable};
pub use self::svg::{render_svg, PlotSpec, YScale, PALETTE};

use crate::trend::TrendReport;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("plot has no curves")]
    EmptyCurves,
    #[error("curve `{label}` has {found} points, expected {expected}")]
    UnequalCurves {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("curve `{label}` has non-positive value {value} at epoch {epoch}; log scale needs values > 0")]
    NonPositiveOnLogScale { label: String, epoch: usize, value: f64 },
    #[error("curve `{label}` has a non-finite value at epoch {epoch}")]
    NonFiniteValue { label: String, epoch: usize },
    #[error("plot size must be positive")]
    InvalidSize,
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
}

/// Pretty-printed JSON with keys `groups`, `window`, `means`, `pairwise`,
/// `ordering`, in that order, and a trailing newline.
pub fn trend_to_json(report: &TrendReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("trend report serializes");
    text.push('\n');
    text
}

pub fn trend_from_json(text: &str) -> Result<TrendReport, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use indexmap::IndexMap;

    use super::*;
    use crate::trend::{trend_report, Window};

    fn report() -> TrendReport {
        let groups: IndexMap<String, Vec<f64>> = [
            ("early".to_string(), vec![0.1, 0.05, 1.0 / 3.0]),
            ("later".to_string(), vec![0.2, 0.07, 0.011]),
        ]
        .into_iter()
        .collect();
        trend_report(&groups, Window::default()).unwrap()
    }

    #[test]
    fn fixed_key_order_and_pairs() {
        let text = trend_to_json(&report());
        let keys = ["\"groups\"", "\"window\"", "\"means\"", "\"pairwise\"", "\"ordering\""];
        let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["pairwise"].as_array().unwrap().len(), 2);
        assert_eq!(value["window"]["length"], "all");
        assert!(text.ends_with("}\n"));
    }

    #[test]
    fn serialize_parse_serialize_is_stable() {
        let text = trend_to_json(&report());
        let back = trend_from_json(&text).unwrap();
        assert_eq!(back, report());
        assert_eq!(trend_to_json(&back), text);
    }
}
