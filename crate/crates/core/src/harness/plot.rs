use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::output::{summarize, summary_key};
use super::run::ResultsTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Fraction of trials recommending the best arm after `t` rounds (UCB baselines).
    SuccessVsHorizon,
    /// Mean samples to stop, with one standard deviation whiskers.
    SamplesBar,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::SuccessVsHorizon => "success_vs_horizon.svg",
            PlotKind::SamplesBar => "samples_bar.svg",
        }
    }
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn plot_w() -> f64 {
    WIDTH - LEFT - RIGHT
}

fn plot_h() -> f64 {
    HEIGHT - TOP - BOTTOM
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

/// Tick step from {1, 2, 5}·10^k giving about five intervals up to `max`.
fn nice_step(max: f64) -> f64 {
    let raw = max / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag)
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w() / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, y_max: f64, y_step: f64, x_label: &str, y_label: &str) {
    let (x0, y0) = (LEFT, TOP + plot_h());
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black"><line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}"/><line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{y0}"/></g>"#,
        x0 + plot_w()
    );
    let mut v = 0.0;
    while v <= y_max * (1.0 + 1e-9) {
        let y = y0 - v / y_max * plot_h();
        let _ = writeln!(
            out,
            r##"<g class="ytick"><line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/><line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{}</text></g>"##,
            x0 - 5.0,
            x0 + plot_w(),
            x0 - 8.0,
            y + 4.0,
            tick_label(v)
        );
        v += y_step;
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w() / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        TOP + plot_h() / 2.0,
        TOP + plot_h() / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, names: &[String]) {
    let _ = writeln!(out, r#"<g class="legend">"#);
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = WIDTH - RIGHT + 20.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y,
            escape(name)
        );
    }
    let _ = writeln!(out, "</g>");
}

fn distinct<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s.as_ref()) {
            out.push(s.as_ref().to_string());
        }
    }
    out
}

fn samples_bar(table: &ResultsTable) -> Result<String> {
    let rows: Vec<usize> = (0..table.rows.len())
        .filter(|&i| table.details.get(i).is_none_or(|d| d.curve.is_none()))
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptySelection(
            "no fixed-confidence trials for samples_bar".into(),
        ));
    }
    let summary = summarize(table);
    let groups = distinct(rows.iter().map(|&i| table.rows[i].instance_id.as_str()));
    let series = distinct(rows.iter().map(|&i| table.rows[i].algorithm.as_str()));
    let key_of = |g: &str, s: &str| {
        rows.iter()
            .map(|&i| &table.rows[i])
            .find(|r| r.instance_id == g && r.algorithm == s)
            .map(|r| summary_key(table, r))
    };

    let top = rows
        .iter()
        .filter_map(|&i| summary.get(&summary_key(table, &table.rows[i])))
        .map(|e| e.mean_samples + e.std_samples)
        .fold(0.0, f64::max);
    let top = if top > 0.0 { top * 1.05 } else { 1.0 };
    let step = nice_step(top);
    let y_max = (top / step).ceil() * step;

    let mut out = String::new();
    header(&mut out, "Samples to identify the best arm");
    axes(&mut out, y_max, step, "instance", "samples (mean ± sd)");
    let group_w = plot_w() / groups.len() as f64;
    let bar_w = group_w * 0.8 / series.len() as f64;
    let y0 = TOP + plot_h();
    for (gi, g) in groups.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text class="xtick" x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + group_w * (gi as f64 + 0.5),
            y0 + 18.0,
            escape(g)
        );
    }
    let _ = writeln!(
        out,
        r#"<g class="plot-area" data-y-max="{y_max}" data-height="{}" data-baseline="{y0}">"#,
        plot_h()
    );
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<g class="series" data-algorithm="{}" fill="{color}">"#,
            escape(s)
        );
        for (gi, g) in groups.iter().enumerate() {
            let Some(key) = key_of(g, s) else { continue };
            let e = &summary[&key];
            let h = e.mean_samples / y_max * plot_h();
            let x = LEFT + group_w * gi as f64 + group_w * 0.1 + bar_w * si as f64;
            let _ = writeln!(
                out,
                r#"<rect class="bar" data-key="{}" data-mean="{}" data-std="{}" x="{x}" y="{}" width="{bar_w}" height="{h}"/>"#,
                escape(&key),
                e.mean_samples,
                e.std_samples,
                y0 - h
            );
            let cx = x + bar_w / 2.0;
            let lo = y0 - (e.mean_samples - e.std_samples).max(0.0) / y_max * plot_h();
            let hi = y0 - (e.mean_samples + e.std_samples) / y_max * plot_h();
            let _ = writeln!(
                out,
                r#"<line class="whisker" x1="{cx}" y1="{lo}" x2="{cx}" y2="{hi}" stroke="black"/>"#
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</g>");
    legend(&mut out, &series);
    out.push_str("</svg>\n");
    Ok(out)
}

fn success_vs_horizon(table: &ResultsTable) -> Result<String> {
    let rows: Vec<usize> = (0..table.rows.len())
        .filter(|&i| table.details.get(i).is_some_and(|d| d.curve.is_some()))
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptySelection(
            "no per-round traces for success_vs_horizon".into(),
        ));
    }
    let keys = distinct(rows.iter().map(|&i| summary_key(table, &table.rows[i])));
    let mut curves: Vec<Vec<(u64, f64)>> = Vec::new();
    for key in &keys {
        let members: Vec<&Vec<(u64, bool)>> = rows
            .iter()
            .filter(|&&i| &summary_key(table, &table.rows[i]) == key)
            .filter_map(|&i| table.details[i].curve.as_ref())
            .collect();
        let points = members[0]
            .iter()
            .enumerate()
            .map(|(j, &(t, _))| {
                let hits = members
                    .iter()
                    .filter(|c| c.get(j).is_some_and(|p| p.1))
                    .count();
                (t, hits as f64 / members.len() as f64)
            })
            .collect();
        curves.push(points);
    }
    let x_max = curves
        .iter()
        .flat_map(|c| c.iter().map(|p| p.0))
        .max()
        .unwrap_or(1)
        .max(1) as f64;

    let mut out = String::new();
    header(&mut out, "Probability of identifying the best arm");
    axes(&mut out, 1.0, 0.2, "rounds", "success frequency");
    let y0 = TOP + plot_h();
    let x_step = nice_step(x_max);
    let mut v = 0.0;
    while v <= x_max * (1.0 + 1e-9) {
        let x = LEFT + v / x_max * plot_w();
        let _ = writeln!(
            out,
            r#"<g class="xtick"><line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" text-anchor="middle">{}</text></g>"#,
            y0 + 5.0,
            y0 + 18.0,
            tick_label(v)
        );
        v += x_step;
    }
    let _ = writeln!(
        out,
        r#"<g class="plot-area" data-x-max="{x_max}" data-width="{}" data-height="{}">"#,
        plot_w(),
        plot_h()
    );
    for (si, (key, points)) in keys.iter().zip(&curves).enumerate() {
        let coords: Vec<String> = points
            .iter()
            .map(|&(t, p)| {
                format!(
                    "{},{}",
                    LEFT + t as f64 / x_max * plot_w(),
                    y0 - p * plot_h()
                )
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<g class="series" data-algorithm="{}"><polyline fill="none" stroke="{}" stroke-width="2" points="{}"/></g>"#,
            escape(key),
            PALETTE[si % PALETTE.len()],
            coords.join(" ")
        );
    }
    let _ = writeln!(out, "</g>");
    legend(&mut out, &keys);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes one SVG figure into `dir` and returns its path.
pub fn emit_plots(table: &ResultsTable, dir: &Path, kind: PlotKind) -> Result<PathBuf> {
    let svg = match kind {
        PlotKind::SamplesBar => samples_bar(table)?,
        PlotKind::SuccessVsHorizon => success_vs_horizon(table)?,
    };
    fs::create_dir_all(dir)?;
    let path = dir.join(kind.file_name());
    fs::write(&path, svg)?;
    Ok(path)
}
