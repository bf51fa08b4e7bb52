//! Ordering statistics over group RWC curves: window means, pairwise
//! dominance, and the ascending-by-mean ordering of groups.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrendError {
    #[error("window is empty: skipping {skip} of {len} transitions leaves nothing")]
    EmptyWindow { skip: usize, len: usize },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 groups to compare, got {0}")]
    TooFewGroups(usize),
    #[error("window length must be at least 1")]
    ZeroLength,
}

/// How many transitions a window spans after the skipped prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowLength {
    #[default]
    All,
    Count(usize),
}

impl FromStr for WindowLength {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(WindowLength::All);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("window must be `all` or a positive integer, got `{s}`")),
            Ok(n) => Ok(WindowLength::Count(n)),
        }
    }
}

impl fmt::Display for WindowLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowLength::All => f.write_str("all"),
            WindowLength::Count(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for WindowLength {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            WindowLength::All => serializer.serialize_str("all"),
            WindowLength::Count(n) => serializer.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for WindowLength {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Count(0) => Err(serde::de::Error::custom("window length must be at least 1")),
            Raw::Count(n) => Ok(WindowLength::Count(n)),
            Raw::Text(t) if t == "all" => Ok(WindowLength::All),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad window length `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub skip_initial: usize,
    pub length: WindowLength,
}

impl Window {
    /// The contiguous slice this window selects. A `Count` longer than what
    /// remains after skipping is cut short.
    pub fn select<'a>(&self, series: &'a [f64]) -> Result<&'a [f64], TrendError> {
        if let WindowLength::Count(0) = self.length {
            return Err(TrendError::ZeroLength);
        }
        if self.skip_initial >= series.len() {
            return Err(TrendError::EmptyWindow {
                skip: self.skip_initial,
                len: series.len(),
            });
        }
        let rest = &series[self.skip_initial..];
        Ok(match self.length {
            WindowLength::All => rest,
            WindowLength::Count(n) => &rest[..n.min(rest.len())],
        })
    }
}

pub fn mean_over_window(series: &[f64], skip_initial: usize, length: WindowLength) -> Result<f64, TrendError> {
    let window = Window { skip_initial, length }.select(series)?;
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

/// Fraction of positions where `a` strictly exceeds `b`. Ties count for neither.
pub fn dominance(a: &[f64], b: &[f64]) -> Result<f64, TrendError> {
    if a.len() != b.len() {
        return Err(TrendError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(TrendError::EmptyWindow { skip: 0, len: 0 });
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    Ok(wins as f64 / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairwiseStat {
    pub a: String,
    pub b: String,
    /// Fraction of window transitions where `a` > `b`.
    pub dominance: f64,
    /// `mean(a) - mean(b)` over the window.
    pub mean_gap: f64,
}

/// Field order here is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendReport {
    pub groups: Vec<String>,
    pub window: Window,
    pub means: IndexMap<String, f64>,
    pub pairwise: Vec<PairwiseStat>,
    /// Groups ascending by window mean; ties broken by name.
    pub ordering: Vec<String>,
}

impl TrendReport {
    pub fn pair(&self, a: &str, b: &str) -> Option<&PairwiseStat> {
        self.pairwise.iter().find(|p| p.a == a && p.b == b)
    }
}

pub fn trend_report(group_series: &IndexMap<String, Vec<f64>>, window: Window) -> Result<TrendReport, TrendError> {
    if group_series.len() < 2 {
        return Err(TrendError::TooFewGroups(group_series.len()));
    }
    let mut lengths = group_series.values().map(Vec::len);
    let len = lengths.next().unwrap_or(0);
    if let Some(other) = lengths.find(|&l| l != len) {
        return Err(TrendError::LengthMismatch(len, other));
    }

    let windows: IndexMap<&str, &[f64]> = group_series
        .iter()
        .map(|(g, s)| window.select(s).map(|w| (g.as_str(), w)))
        .collect::<Result<_, _>>()?;
    let means: IndexMap<String, f64> = windows
        .iter()
        .map(|(g, w)| (g.to_string(), w.iter().sum::<f64>() / w.len() as f64))
        .collect();

    let mut pairwise = Vec::with_capacity(windows.len() * (windows.len() - 1));
    for (a, wa) in &windows {
        for (b, wb) in &windows {
            if a == b {
                continue;
            }
            pairwise.push(PairwiseStat {
                a: a.to_string(),
                b: b.to_string(),
                dominance: dominance(wa, wb)?,
                mean_gap: means[*a] - means[*b],
            });
        }
    }

    let mut ordering: Vec<String> = means.keys().cloned().collect();
    ordering.sort_by(|x, y| means[x].total_cmp(&means[y]).then_with(|| x.cmp(y)));

    Ok(TrendReport {
        groups: group_series.keys().cloned().collect(),
        window,
        means,
        pairwise,
        ordering,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(entries: &[(&str, &[f64])]) -> IndexMap<String, Vec<f64>> {
        entries.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect()
    }

    #[test]
    fn window_means() {
        assert!((mean_over_window(&[0.2, 0.4], 0, WindowLength::All).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(mean_over_window(&[9.0, 1.0, 3.0], 1, WindowLength::All).unwrap(), 2.0);
        assert_eq!(mean_over_window(&[9.0, 1.0, 3.0], 0, WindowLength::Count(2)).unwrap(), 5.0);
        assert_eq!(mean_over_window(&[9.0, 1.0, 3.0], 2, WindowLength::Count(5)).unwrap(), 3.0);
        assert_eq!(
            mean_over_window(&[1.0], 1, WindowLength::All),
            Err(TrendError::EmptyWindow { skip: 1, len: 1 })
        );
    }

    #[test]
    fn dominance_fixtures() {
        assert_eq!(dominance(&[0.1, 0.2, 0.3], &[0.2, 0.1, 0.1]).unwrap(), 2.0 / 3.0);
        assert_eq!(dominance(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(dominance(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(dominance(&[1.0], &[1.0, 2.0]), Err(TrendError::LengthMismatch(1, 2)));
    }

    #[test]
    fn ordering_follows_means() {
        let r = trend_report(
            &groups(&[("early", &[0.1, 0.1]), ("middle", &[0.3, 0.3]), ("later", &[0.2, 0.2])]),
            Window::default(),
        )
        .unwrap();
        assert_eq!(r.ordering, ["early", "later", "middle"]);
        assert_eq!(r.pairwise.len(), 6);
        assert_eq!(r.pair("middle", "early").unwrap().dominance, 1.0);
        assert_eq!(r.pair("early", "middle").unwrap().dominance, 0.0);
    }

    #[test]
    fn identical_groups_tie() {
        let r = trend_report(&groups(&[("b", &[0.4, 0.2]), ("a", &[0.4, 0.2])]), Window::default()).unwrap();
        assert_eq!(r.ordering, ["a", "b"]);
        assert_eq!(r.groups, ["b", "a"]);
        for p in &r.pairwise {
            assert_eq!(p.mean_gap, 0.0);
            assert_eq!(p.dominance, 0.0);
        }
    }

    #[test]
    fn too_few_groups() {
        assert_eq!(
            trend_report(&groups(&[("only", &[1.0])]), Window::default()),
            Err(TrendError::TooFewGroups(1))
        );
    }

    #[test]
    fn skip_applies_to_dominance_too() {
        let w = Window {
            skip_initial: 1,
            length: WindowLength::All,
        };
        let r = trend_report(&groups(&[("a", &[9.0, 1.0, 1.0]), ("b", &[0.0, 2.0, 2.0])]), w).unwrap();
        assert_eq!(r.pair("a", "b").unwrap().dominance, 0.0);
        assert_eq!(r.means["a"], 1.0);
    }

    #[test]
    fn window_length_parsing() {
        assert_eq!("all".parse::<WindowLength>().unwrap(), WindowLength::All);
        assert_eq!("7".parse::<WindowLength>().unwrap(), WindowLength::Count(7));
        assert!("0".parse::<WindowLength>().is_err());
        assert!("x".parse::<WindowLength>().is_err());
    }
}
