//! Standalone SVG 1.1 line plots.

use std::fmt::Write as _;

use super::ReportError;

/// Curve colours, cycled in curve order.
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum YScale {
    #[default]
    Linear,
    Log10,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub curves: Vec<(String, Vec<f64>)>,
    pub y_scale: YScale,
    pub width: u32,
    pub height: u32,
}

impl PlotSpec {
    pub fn new(title: impl Into<String>, curves: Vec<(String, Vec<f64>)>) -> Self {
        Self {
            title: title.into(),
            curves,
            y_scale: YScale::Linear,
            width: 960,
            height: 540,
        }
    }

    fn validate(&self) -> Result<usize, ReportError> {
        let Some((_, first)) = self.curves.first() else {
            return Err(ReportError::EmptyCurves);
        };
        if self.width == 0 || self.height == 0 {
            return Err(ReportError::InvalidSize);
        }
        let len = first.len();
        for (label, values) in &self.curves {
            if values.len() != len || len == 0 {
                return Err(ReportError::UnequalCurves {
                    label: label.clone(),
                    expected: len.max(1),
                    found: values.len(),
                });
            }
            for (i, &v) in values.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ReportError::NonFiniteValue {
                        label: label.clone(),
                        epoch: i + 1,
                    });
                }
                if self.y_scale == YScale::Log10 && v <= 0.0 {
                    return Err(ReportError::NonPositiveOnLogScale {
                        label: label.clone(),
                        epoch: i + 1,
                        value: v,
                    });
                }
            }
        }
        Ok(len)
    }
}

const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 200.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;
const TICK: f64 = 5.0;

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Rounds `x` to 1, 2, 5 or 10 times a power of ten.
fn nice_step(span: f64, target_ticks: usize) -> f64 {
    let raw = span / target_ticks as f64;
    let magnitude = 10f64.powf(raw.log10().floor());
    let fraction = raw / magnitude;
    let nice = if fraction <= 1.0 {
        1.0
    } else if fraction <= 2.0 {
        2.0
    } else if fraction <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * magnitude
}

struct Axis {
    lo: f64,
    hi: f64,
    ticks: Vec<(f64, String)>,
}

fn linear_axis(min: f64, max: f64) -> Axis {
    let (min, max) = if max > min {
        (min, max)
    } else {
        let pad = if min == 0.0 { 1.0 } else { min.abs() * 0.1 };
        (min - pad, max + pad)
    };
    let step = nice_step(max - min, 6);
    let lo = (min / step).floor() * step;
    let hi = (max / step).ceil() * step;
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let count = ((hi - lo) / step).round() as usize;
    let ticks = (0..=count)
        .map(|i| {
            let v = lo + i as f64 * step;
            (v, format!("{v:.decimals$}"))
        })
        .collect();
    Axis { lo, hi, ticks }
}

/// Axis over log10 values, ticks at whole decades.
fn log_axis(min: f64, max: f64) -> Axis {
    let lo = min.floor();
    let mut hi = max.ceil();
    if hi <= lo {
        hi = lo + 1.0;
    }
    let decades = (hi - lo) as i64;
    let stride = (decades as f64 / 8.0).ceil().max(1.0) as i64;
    let ticks = (0..=decades)
        .step_by(stride as usize)
        .map(|k| {
            let e = lo as i64 + k;
            (e as f64, format!("1e{e}"))
        })
        .collect();
    Axis { lo, hi, ticks }
}

fn epoch_axis(points: usize) -> Axis {
    let (lo, hi) = (1.0, points.max(2) as f64);
    let step = nice_step(hi - lo, 8).max(1.0).round();
    let mut ticks = vec![(1.0, "1".to_owned())];
    let mut v = step;
    while v <= hi {
        if v > 1.0 {
            ticks.push((v, format!("{v:.0}")));
        }
        v += step;
    }
    Axis { lo, hi, ticks }
}

/// Renders one polyline per curve with axes, tick labels, a legend and the
/// title. Output is a pure function of `spec`.
pub fn render_svg(spec: &PlotSpec) -> Result<String, ReportError> {
    let points = spec.validate()?;
    let transform = |v: f64| match spec.y_scale {
        YScale::Linear => v,
        YScale::Log10 => v.log10(),
    };
    let (min, max) = spec
        .curves
        .iter()
        .flat_map(|(_, vs)| vs.iter().map(|&v| transform(v)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let y_axis = match spec.y_scale {
        YScale::Linear => linear_axis(min, max),
        YScale::Log10 => log_axis(min, max),
    };
    let x_axis = epoch_axis(points);

    let (w, h) = (f64::from(spec.width), f64::from(spec.height));
    let left = MARGIN_LEFT;
    let right = (w - MARGIN_RIGHT).max(left + 1.0);
    let top = MARGIN_TOP;
    let bottom = (h - MARGIN_BOTTOM).max(top + 1.0);
    let px = |epoch: f64| left + (epoch - x_axis.lo) / (x_axis.hi - x_axis.lo) * (right - left);
    let py = |v: f64| bottom - (v - y_axis.lo) / (y_axis.hi - y_axis.lo) * (bottom - top);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif">"#,
        spec.width, spec.height, spec.width, spec.height
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, spec.width, spec.height);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="18">{}</text>"#,
        (left + right) / 2.0,
        top / 2.0 + 6.0,
        escape(&spec.title)
    );

    svg.push_str("<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n");
    let _ = writeln!(svg, r#"<line x1="{left:.2}" y1="{bottom:.2}" x2="{right:.2}" y2="{bottom:.2}"/>"#);
    let _ = writeln!(svg, r#"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{bottom:.2}"/>"#);
    for (v, _) in &x_axis.ticks {
        let x = px(*v);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}"/>"#, bottom + TICK);
    }
    for (v, _) in &y_axis.ticks {
        let y = py(*v);
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}"/>"#, left - TICK);
        let _ = writeln!(
            svg,
            r##"<line x1="{left:.2}" y1="{y:.2}" x2="{right:.2}" y2="{y:.2}" stroke="#dddddd"/>"##
        );
    }
    svg.push_str("</g>\n");

    svg.push_str("<g class=\"tick-labels\" font-size=\"12\" fill=\"black\">\n");
    for (v, label) in &x_axis.ticks {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(*v),
            bottom + TICK + 14.0,
            escape(label)
        );
    }
    for (v, label) in &y_axis.ticks {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - TICK - 4.0,
            py(*v) + 4.0,
            escape(label)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">epoch</text>"#,
        (left + right) / 2.0,
        h - 15.0
    );
    let y_title = match spec.y_scale {
        YScale::Linear => "RWC",
        YScale::Log10 => "RWC (log10)",
    };
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" font-size="14" transform="rotate(-90 20 {:.2})">{y_title}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );
    svg.push_str("</g>\n");

    svg.push_str("<g class=\"curves\" fill=\"none\" stroke-width=\"2\">\n");
    for (i, (_, values)) in spec.curves.iter().enumerate() {
        let coords: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.2},{:.2}", px((t + 1) as f64), py(transform(v))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline stroke="{}" points="{}"/>"#,
            PALETTE[i % PALETTE.len()],
            coords.join(" ")
        );
    }
    svg.push_str("</g>\n");

    svg.push_str("<g class=\"legend\" font-size=\"12\">\n");
    for (i, (label, _)) in spec.curves.iter().enumerate() {
        let y = top + 10.0 + 20.0 * i as f64;
        let x = right + 20.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="3"/><text x="{:.2}" y="{:.2}" fill="black">{}</text></g>"#,
            x + 24.0,
            x + 30.0,
            y + 4.0,
            escape(label)
        );
    }
    svg.push_str("</g>\n");
    svg.push_str("</svg>\n");
    Ok(svg)
}
