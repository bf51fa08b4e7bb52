//! Rule-based assignment of parameter names to groups, and reduction of
//! per-layer RWC series to per-group series.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{NameFilter, PatternError};
use crate::rwc::RwcSeries;

/// Ordinal rules count only tensors matching this unless told otherwise.
pub const DEFAULT_MEMBER_FILTER: &str = "*conv*weight*";

#[derive(Debug, Error)]
pub enum GroupingError {
    #[error("rule for group `{group}` has invalid range [{lo}, {hi}] (need 1 <= lo <= hi)")]
    InvalidRange { group: String, lo: usize, hi: usize },
    #[error("rule for group `{group}` asks for ordinals up to {hi}, but only {available} layers match `{member_filter}`")]
    RangeOutOfBounds {
        group: String,
        member_filter: String,
        hi: usize,
        available: usize,
    },
    #[error("layer list is empty")]
    EmptyLayerList,
    #[error("layer `{0}` listed twice")]
    DuplicateLayer(String),
    #[error("no grouping rule matched any layer")]
    NoRuleMatched,
    #[error("group `{group}`: member series have different lengths ({expected} vs {found} for `{layer}`)")]
    LengthMismatch {
        group: String,
        layer: String,
        expected: usize,
        found: usize,
    },
    #[error("no series for grouped layer `{0}`")]
    MissingSeries(String),
    #[error("no parameter count for layer `{0}`")]
    MissingParamCount(String),
    #[error("parameter count for layer `{0}` must be positive")]
    ZeroParamCount(String),
    #[error("invalid rules document: {0}")]
    InvalidRules(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// One grouping rule, as written in a rules document:
///
/// ```json
/// [{"kind": "name", "pattern": "layer1.*", "group": "block1"},
///  {"kind": "ordinal", "member_filter": "*conv*weight*", "range": [1, 4], "group": "early"}]
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum GroupRule {
    #[serde(rename = "name")]
    NamePattern { pattern: String, group: String },
    #[serde(rename = "ordinal")]
    OrdinalRange {
        #[serde(default = "default_member_filter")]
        member_filter: String,
        /// Inclusive, 1-based.
        range: (usize, usize),
        group: String,
    },
}

fn default_member_filter() -> String {
    DEFAULT_MEMBER_FILTER.to_owned()
}

impl GroupRule {
    pub fn name(pattern: &str, group: &str) -> Self {
        GroupRule::NamePattern {
            pattern: pattern.to_owned(),
            group: group.to_owned(),
        }
    }

    pub fn ordinal(member_filter: &str, lo: usize, hi: usize, group: &str) -> Self {
        GroupRule::OrdinalRange {
            member_filter: member_filter.to_owned(),
            range: (lo, hi),
            group: group.to_owned(),
        }
    }

    pub fn group(&self) -> &str {
        match self {
            GroupRule::NamePattern { group, .. } | GroupRule::OrdinalRange { group, .. } => group,
        }
    }
}

/// Parses a JSON rules document (a list of rule objects).
pub fn parse_rules(text: &str) -> Result<Vec<GroupRule>, GroupingError> {
    let rules: Vec<GroupRule> =
        serde_json::from_str(text).map_err(|e| GroupingError::InvalidRules(e.to_string()))?;
    if rules.is_empty() {
        return Err(GroupingError::InvalidRules("no rules".into()));
    }
    Ok(rules)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Resnet18Blocks,
    Vgg19Eml,
    AlexnetEml,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Resnet18Blocks, Preset::Vgg19Eml, Preset::AlexnetEml];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Resnet18Blocks => "resnet18",
            Preset::Vgg19Eml => "vgg19",
            Preset::AlexnetEml => "alexnet",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown preset `{s}` (expected resnet18, vgg19 or alexnet)"))
    }
}

/// Grouping rules for the standard architectures.
///
/// ResNet-18 groups its four residual stages by name prefix; the stem and
/// classifier stay ungrouped. VGG-19 and AlexNet split their convolution
/// layers by ordinal into early/middle/later. For VGG-19, middle is 5..=11
/// and later starts at 12.
pub fn preset(architecture: Preset) -> Vec<GroupRule> {
    match architecture {
        Preset::Resnet18Blocks => (1..=4)
            .map(|b| GroupRule::name(&format!("layer{b}.*"), &format!("block{b}")))
            .collect(),
        Preset::Vgg19Eml => vec![
            GroupRule::ordinal(DEFAULT_MEMBER_FILTER, 1, 4, "early"),
            GroupRule::ordinal(DEFAULT_MEMBER_FILTER, 5, 11, "middle"),
            GroupRule::ordinal(DEFAULT_MEMBER_FILTER, 12, 16, "later"),
        ],
        Preset::AlexnetEml => vec![
            GroupRule::ordinal(DEFAULT_MEMBER_FILTER, 1, 1, "early"),
            GroupRule::ordinal(DEFAULT_MEMBER_FILTER, 2, 3, "middle"),
            GroupRule::ordinal(DEFAULT_MEMBER_FILTER, 4, 5, "later"),
        ],
    }
}

/// Rules resolved against a concrete layer list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerGroupMap {
    rules: Vec<GroupRule>,
    resolved: IndexMap<String, String>,
}

impl LayerGroupMap {
    pub fn rules(&self) -> &[GroupRule] {
        &self.rules
    }

    /// Layer name to group name, in layer-list order. Ungrouped layers are absent.
    pub fn resolved(&self) -> &IndexMap<String, String> {
        &self.resolved
    }

    pub fn group_of(&self, layer: &str) -> Option<&str> {
        self.resolved.get(layer).map(String::as_str)
    }

    /// Groups that received at least one layer, in rule order.
    pub fn groups(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.rules
            .iter()
            .map(GroupRule::group)
            .filter(|g| self.resolved.values().any(|v| v == g))
            .filter(|g| seen.insert(*g))
            .collect()
    }

    /// Member layers of `group`, in layer-list order.
    pub fn members<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.resolved
            .iter()
            .filter(move |(_, g)| g.as_str() == group)
            .map(|(l, _)| l.as_str())
    }
}

/// Resolves rules against `layer_names`. The first rule matching a layer wins.
pub fn compile_group_map(rules: &[GroupRule], layer_names: &[String]) -> Result<LayerGroupMap, GroupingError> {
    if layer_names.is_empty() {
        return Err(GroupingError::EmptyLayerList);
    }
    let mut unique = HashSet::with_capacity(layer_names.len());
    for name in layer_names {
        if !unique.insert(name.as_str()) {
            return Err(GroupingError::DuplicateLayer(name.clone()));
        }
    }

    // assignment[i] = group of layer_names[i]
    let mut assignment: Vec<Option<&str>> = vec![None; layer_names.len()];
    for rule in rules {
        match rule {
            GroupRule::NamePattern { pattern, group } => {
                let filter = NameFilter::new(pattern)?;
                for (slot, name) in assignment.iter_mut().zip(layer_names) {
                    if slot.is_none() && filter.matches(name) {
                        *slot = Some(group);
                    }
                }
            }
            GroupRule::OrdinalRange {
                member_filter,
                range: (lo, hi),
                group,
            } => {
                if *lo < 1 || lo > hi {
                    return Err(GroupingError::InvalidRange {
                        group: group.clone(),
                        lo: *lo,
                        hi: *hi,
                    });
                }
                let filter = NameFilter::new(member_filter)?;
                let members: Vec<usize> = layer_names
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| filter.matches(n))
                    .map(|(i, _)| i)
                    .collect();
                if *hi > members.len() {
                    return Err(GroupingError::RangeOutOfBounds {
                        group: group.clone(),
                        member_filter: member_filter.clone(),
                        hi: *hi,
                        available: members.len(),
                    });
                }
                for &i in &members[lo - 1..*hi] {
                    if assignment[i].is_none() {
                        assignment[i] = Some(group);
                    }
                }
            }
        }
    }

    let resolved: IndexMap<String, String> = layer_names
        .iter()
        .zip(assignment)
        .filter_map(|(name, g)| g.map(|g| (name.clone(), g.to_owned())))
        .collect();
    if resolved.is_empty() {
        return Err(GroupingError::NoRuleMatched);
    }
    Ok(LayerGroupMap {
        rules: rules.to_vec(),
        resolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Unweighted,
    ParamCount,
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unweighted" => Ok(Weighting::Unweighted),
            "paramcount" => Ok(Weighting::ParamCount),
            other => Err(format!("unknown weighting `{other}` (expected unweighted or paramcount)")),
        }
    }
}

/// Weighted mean computed as an offset from the first value, so that a set of
/// identical values reduces to exactly that value.
pub(crate) fn anchored_mean(values: &[f64], weights: &[f64]) -> f64 {
    let anchor = values[0];
    let total: f64 = weights.iter().sum();
    let shift: f64 = values.iter().zip(weights).map(|(v, w)| w * (v - anchor)).sum();
    let mean = anchor + shift / total;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    mean.clamp(lo, hi)
}

/// Reduces per-layer series to one series per group.
pub fn group_series(
    per_layer: &IndexMap<String, RwcSeries>,
    map: &LayerGroupMap,
    weighting: Weighting,
    param_counts: &IndexMap<String, usize>,
) -> Result<IndexMap<String, RwcSeries>, GroupingError> {
    let mut out = IndexMap::new();
    for group in map.groups() {
        let mut members: Vec<&RwcSeries> = Vec::new();
        let mut weights = Vec::new();
        for layer in map.members(group) {
            let series = per_layer
                .get(layer)
                .ok_or_else(|| GroupingError::MissingSeries(layer.to_owned()))?;
            let weight = match weighting {
                Weighting::Unweighted => 1.0,
                Weighting::ParamCount => match param_counts.get(layer) {
                    None => return Err(GroupingError::MissingParamCount(layer.to_owned())),
                    Some(0) => return Err(GroupingError::ZeroParamCount(layer.to_owned())),
                    Some(&c) => c as f64,
                },
            };
            if let Some(first) = members.first() {
                if first.values.len() != series.values.len() {
                    return Err(GroupingError::LengthMismatch {
                        group: group.to_owned(),
                        layer: layer.to_owned(),
                        expected: first.values.len(),
                        found: series.values.len(),
                    });
                }
            }
            members.push(series);
            weights.push(weight);
        }
        let len = members[0].values.len();
        let mut column = vec![0.0; members.len()];
        let values = (0..len)
            .map(|t| {
                for (slot, m) in column.iter_mut().zip(&members) {
                    *slot = m.values[t];
                }
                anchored_mean(&column, &weights)
            })
            .collect();
        out.insert(
            group.to_owned(),
            RwcSeries {
                label: group.to_owned(),
                mode: members[0].mode,
                values,
            },
        );
    }
    Ok(out)
}
