//! SVG rendering of the two headline figures: normalized-return curves
//! (mean with a standard-error band per controller) and per-policy
//! execution counts.
//!
//! Smoothing (a centered moving average over eval points) happens here in
//! the plot layer only; stored metrics stay raw.

use std::collections::BTreeMap;

use crate::controllers::ControllerKind;
use crate::error::{Error, Result};
use crate::harness::MetricsRow;

const WIDTH: f64 = 920.0;
const PANEL_HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Default smoothing window, in eval points.
pub const DEFAULT_SMOOTH_WINDOW: usize = 5;

fn color_for(controller: &str) -> &'static str {
    match controller {
        "nonmono" => "#1f77b4",
        "pex" => "#ff7f0e",
        "offline" => "#2ca02c",
        "buffer" => "#d62728",
        _ => "#7f7f7f",
    }
}

fn label_for(controller: &str) -> String {
    controller
        .parse::<ControllerKind>()
        .map(|k| k.label().to_string())
        .unwrap_or_else(|_| controller.to_string())
}

/// Per-step mean and standard error across seeds.
struct Series {
    steps: Vec<u64>,
    mean: Vec<f64>,
    stderr: Vec<f64>,
}

fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return xs.to_vec();
    }
    let half = window / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(xs.len());
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    top: f64,
}

impl Scale {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x1 - self.x0).max(1e-12);
        MARGIN_LEFT + (v - self.x0) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y1 - self.y0).max(1e-12);
        let h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        self.top + MARGIN_TOP + h - (v - self.y0) / span * h
    }
}

fn polyline(points: impl Iterator<Item = (f64, f64)>) -> String {
    points
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders all rows into a two-panel SVG document.
pub fn render_svg(rows: &[MetricsRow], smooth_window: usize) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no metrics rows to plot".into()));
    }

    let mut svg = String::new();
    let total_height = PANEL_HEIGHT * 2.0;
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{total_height}\" \
         viewBox=\"0 0 {WIDTH} {total_height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{total_height}\" fill=\"white\"/>\n"
    ));

    render_return_panel(&mut svg, rows, smooth_window, 0.0)?;
    render_count_panel(&mut svg, rows, PANEL_HEIGHT)?;

    svg.push_str("</svg>\n");
    Ok(svg)
}

fn render_return_panel(
    svg: &mut String,
    rows: &[MetricsRow],
    smooth_window: usize,
    top: f64,
) -> Result<()> {
    let series = aggregate_return(rows);
    let x_max = rows.iter().map(|r| r.step).max().unwrap() as f64;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series.values() {
        for (m, e) in s.mean.iter().zip(&s.stderr) {
            y_min = y_min.min(m - e);
            y_max = y_max.max(m + e);
        }
    }
    let pad = ((y_max - y_min) * 0.08).max(1.0);
    let scale = Scale {
        x0: 0.0,
        x1: x_max,
        y0: y_min - pad,
        y1: y_max + pad,
        top,
    };

    axes(svg, &scale, "Environment steps", "Normalized return");
    title(
        svg,
        &scale,
        "Normalized return (mean +/- stderr over seeds)",
    );

    let mut legend_y = top + MARGIN_TOP + 10.0;
    for (controller, s) in &series {
        let color = color_for(controller);
        let mean = moving_average(&s.mean, smooth_window);
        let stderr = moving_average(&s.stderr, smooth_window);

        // Band: forward along mean+e, back along mean-e.
        let mut band: Vec<(f64, f64)> = Vec::new();
        for i in 0..s.steps.len() {
            band.push((scale.x(s.steps[i] as f64), scale.y(mean[i] + stderr[i])));
        }
        for i in (0..s.steps.len()).rev() {
            band.push((scale.x(s.steps[i] as f64), scale.y(mean[i] - stderr[i])));
        }
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
            polyline(band.into_iter())
        ));
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            polyline(
                s.steps
                    .iter()
                    .zip(&mean)
                    .map(|(&st, &m)| (scale.x(st as f64), scale.y(m)))
            )
        ));

        let lx = WIDTH - MARGIN_RIGHT + 14.0;
        svg.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{legend_y}\" x2=\"{}\" y2=\"{legend_y}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 22.0
        ));
        svg.push_str(&format!(
            "<text class=\"legend\" x=\"{}\" y=\"{}\">{}</text>\n",
            lx + 28.0,
            legend_y + 4.0,
            label_for(controller)
        ));
        legend_y += 18.0;
    }
    Ok(())
}

fn render_count_panel(svg: &mut String, rows: &[MetricsRow], top: f64) -> Result<()> {
    let offline = aggregate_counts(rows, true);
    let online = aggregate_counts(rows, false);
    let x_max = rows.iter().map(|r| r.step).max().unwrap() as f64;
    let y_max = offline
        .values()
        .chain(online.values())
        .flat_map(|s| s.mean.iter())
        .fold(1.0f64, |acc, &v| acc.max(v));
    let scale = Scale {
        x0: 0.0,
        x1: x_max,
        y0: 0.0,
        y1: y_max * 1.08,
        top,
    };

    axes(svg, &scale, "Environment steps", "Execution count");
    title(svg, &scale, "Execution count per policy (mean over seeds)");

    let mut legend_y = top + MARGIN_TOP + 10.0;
    for (controller, series) in offline.iter() {
        let color = color_for(controller);
        draw_count_line(svg, &scale, series, color, true);
        legend_entry(
            svg,
            &mut legend_y,
            color,
            true,
            &format!("{}_Offline", label_for(controller)),
        );
    }
    for (controller, series) in online.iter() {
        let color = color_for(controller);
        draw_count_line(svg, &scale, series, color, false);
        legend_entry(
            svg,
            &mut legend_y,
            color,
            false,
            &format!("{}_Online", label_for(controller)),
        );
    }
    Ok(())
}

fn draw_count_line(svg: &mut String, scale: &Scale, s: &Series, color: &str, dashed: bool) {
    let dash = if dashed {
        " stroke-dasharray=\"6,4\""
    } else {
        ""
    };
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"{dash}/>\n",
        polyline(
            s.steps
                .iter()
                .zip(&s.mean)
                .map(|(&st, &m)| (scale.x(st as f64), scale.y(m)))
        )
    ));
}

fn legend_entry(svg: &mut String, legend_y: &mut f64, color: &str, dashed: bool, label: &str) {
    let lx = WIDTH - MARGIN_RIGHT + 14.0;
    let dash = if dashed {
        " stroke-dasharray=\"6,4\""
    } else {
        ""
    };
    svg.push_str(&format!(
        "<line x1=\"{lx}\" y1=\"{legend_y}\" x2=\"{}\" y2=\"{legend_y}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>\n",
        lx + 22.0
    ));
    svg.push_str(&format!(
        "<text class=\"legend\" x=\"{}\" y=\"{}\">{label}</text>\n",
        lx + 28.0,
        *legend_y + 4.0,
    ));
    *legend_y += 18.0;
}

fn axes(svg: &mut String, scale: &Scale, x_label: &str, y_label: &str) {
    let x_axis_y = scale.top + PANEL_HEIGHT - MARGIN_BOTTOM;
    let y_axis_top = scale.top + MARGIN_TOP;
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{x_axis_y}\" x2=\"{}\" y2=\"{x_axis_y}\" stroke=\"#333\"/>\n",
        WIDTH - MARGIN_RIGHT
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{y_axis_top}\" x2=\"{MARGIN_LEFT}\" y2=\"{x_axis_y}\" stroke=\"#333\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        x_axis_y + 34.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" transform=\"rotate(-90 18 {})\" text-anchor=\"middle\">{y_label}</text>\n",
        (y_axis_top + x_axis_y) / 2.0,
        (y_axis_top + x_axis_y) / 2.0
    ));
    // Min/max ticks.
    for (v, label) in [
        (scale.y0, format!("{:.0}", scale.y0)),
        (scale.y1, format!("{:.0}", scale.y1)),
    ] {
        let y = scale.y(v);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{label}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0
        ));
    }
    for (v, label) in [
        (scale.x0, format!("{:.0}", scale.x0)),
        (scale.x1, format!("{:.0}", scale.x1)),
    ] {
        let x = scale.x(v);
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n",
            x_axis_y + 16.0
        ));
    }
}

fn title(svg: &mut String, scale: &Scale, text: &str) {
    svg.push_str(&format!(
        "<text x=\"{MARGIN_LEFT}\" y=\"{}\" font-size=\"14\" font-weight=\"bold\">{text}</text>\n",
        scale.top + 22.0
    ));
}

fn aggregate_return(rows: &[MetricsRow]) -> BTreeMap<String, Series> {
    aggregate_by(rows, |r| r.return_norm)
}

fn aggregate_counts(rows: &[MetricsRow], offline: bool) -> BTreeMap<String, Series> {
    aggregate_by(rows, move |r| {
        if offline {
            r.offline_count as f64
        } else {
            r.online_count as f64
        }
    })
}

fn aggregate_by(
    rows: &[MetricsRow],
    pick: impl Fn(&MetricsRow) -> f64,
) -> BTreeMap<String, Series> {
    let mut grouped: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry(r.controller.clone())
            .or_default()
            .entry(r.step)
            .or_default()
            .push(pick(r));
    }
    grouped
        .into_iter()
        .map(|(controller, by_step)| {
            let mut steps = Vec::new();
            let mut mean = Vec::new();
            let mut stderr = Vec::new();
            for (step, values) in by_step {
                let n = values.len() as f64;
                let m = values.iter().sum::<f64>() / n;
                steps.push(step);
                mean.push(m);
                stderr.push(if values.len() > 1 {
                    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
                    (var / n).sqrt()
                } else {
                    0.0
                });
            }
            (
                controller,
                Series {
                    steps,
                    mean,
                    stderr,
                },
            )
        })
        .collect()
}
