//! Long-format CSV: one row per (label, epoch) point.
//!
//! Per-run series use `run_id,label,epoch,value`; seed aggregates use
//! `label,epoch,mean,std,n`. Epoch is the 1-based transition index. Reals
//! are written with 17 significant digits, so they parse back exactly.

use indexmap::IndexMap;

use super::ReportError;
use crate::aggregate::AggregateSeries;
use crate::rwc::RwcSeries;

pub const SERIES_HEADER: [&str; 4] = ["run_id", "label", "epoch", "value"];
pub const AGGREGATE_HEADER: [&str; 5] = ["label", "epoch", "mean", "std", "n"];

/// 17 significant digits in scientific notation.
pub fn format_real(value: f64) -> String {
    format!("{value:.16e}")
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("writing to memory cannot fail");
    String::from_utf8(bytes).expect("CSV built from UTF-8 strings")
}

/// Rows are grouped by label (first-appearance order), then by run in input
/// order, then by ascending epoch.
pub fn series_to_csv<'a, I>(records: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a RwcSeries)>,
{
    let mut by_label: IndexMap<&str, Vec<(&str, &RwcSeries)>> = IndexMap::new();
    for (run_id, series) in records {
        by_label.entry(series.label.as_str()).or_default().push((run_id, series));
    }
    let mut w = writer();
    w.write_record(SERIES_HEADER).expect("in-memory write");
    for (label, runs) in by_label {
        for (run_id, series) in runs {
            for (t, value) in series.values.iter().enumerate() {
                w.write_record([run_id, label, &(t + 1).to_string(), &format_real(*value)])
                    .expect("in-memory write");
            }
        }
    }
    finish(w)
}

pub fn aggregate_to_csv<'a, I>(aggregates: I) -> String
where
    I: IntoIterator<Item = &'a AggregateSeries>,
{
    let mut w = writer();
    w.write_record(AGGREGATE_HEADER).expect("in-memory write");
    for agg in aggregates {
        let n = agg.n.to_string();
        for (t, (mean, std)) in agg.mean.iter().zip(&agg.std).enumerate() {
            w.write_record([
                agg.label.as_str(),
                &(t + 1).to_string(),
                &format_real(*mean),
                &format_real(*std),
                &n,
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Series,
    Aggregate,
}

/// Curves recovered from either CSV flavour: the value column for series
/// input, the mean column for aggregate input.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub kind: CsvKind,
    pub curves: IndexMap<String, Vec<f64>>,
}

/// Parses series or aggregate CSV. Series input spanning several runs keys
/// its curves as `run_id/label`.
pub fn parse_curves_csv(text: &str) -> Result<CurveTable, ReportError> {
    let malformed = |msg: String| ReportError::MalformedCsv(msg);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    let columns: Vec<&str> = header.iter().collect();
    let kind = if columns == SERIES_HEADER {
        CsvKind::Series
    } else if columns == AGGREGATE_HEADER {
        CsvKind::Aggregate
    } else {
        return Err(malformed(format!("unrecognized header `{}`", columns.join(","))));
    };

    let mut points: IndexMap<(String, String), Vec<(usize, f64)>> = IndexMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let row = line + 2;
        let field = |i: usize| record.get(i).ok_or_else(|| malformed(format!("line {row}: missing column {i}")));
        let (run, label, epoch, value) = match kind {
            CsvKind::Series => (field(0)?, field(1)?, field(2)?, field(3)?),
            CsvKind::Aggregate => ("", field(0)?, field(1)?, field(2)?),
        };
        let epoch: usize = epoch
            .parse()
            .map_err(|_| malformed(format!("line {row}: bad epoch `{epoch}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| malformed(format!("line {row}: bad number `{value}`")))?;
        if !value.is_finite() {
            return Err(malformed(format!("line {row}: non-finite value")));
        }
        points
            .entry((run.to_owned(), label.to_owned()))
            .or_default()
            .push((epoch, value));
    }

    let multi_run = {
        let mut runs = points.keys().map(|(r, _)| r.as_str());
        let first = runs.next();
        runs.any(|r| Some(r) != first)
    };
    let mut curves = IndexMap::with_capacity(points.len());
    for ((run, label), mut pts) in points {
        pts.sort_by_key(|p| p.0);
        for (i, (epoch, _)) in pts.iter().enumerate() {
            if *epoch != i + 1 {
                return Err(malformed(format!(
                    "`{label}`: epochs must run 1..={} without gaps or repeats",
                    pts.len()
                )));
            }
        }
        let key = if multi_run { format!("{run}/{label}") } else { label };
        curves.insert(key, pts.into_iter().map(|p| p.1).collect());
    }
    Ok(CurveTable { kind, curves })
}
