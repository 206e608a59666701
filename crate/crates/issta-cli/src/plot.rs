//! SVG panels: position and error, pressure and control, sliding variable.

use std::path::Path;

use plotters::prelude::*;

use issta::sim_engine::SimTrace;

use crate::CliError;

/// Upper bound on points drawn per series.
const MAX_POINTS: usize = 3000;

const COLORS: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(23, 190, 207),
];

fn err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Other(format!("plot: {e}"))
}

fn decimate(t: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let stride = t.len().div_ceil(MAX_POINTS).max(1);
    t.iter().zip(y).step_by(stride).map(|(a, b)| (*a, *b)).filter(|(_, b)| b.is_finite()).collect()
}

fn range(series: &[Vec<(f64, f64)>]) -> (f64, f64) {
    let (lo, hi) = series
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-12);
    (lo - pad, hi + pad)
}

fn panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    ylabel: &str,
    t_end: f64,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<(), CliError>
where
    DB::ErrorType: 'static,
{
    let data: Vec<Vec<(f64, f64)>> = series.iter().map(|s| s.1.clone()).collect();
    let (lo, hi) = range(&data);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..t_end, lo..hi)
        .map_err(err)?;
    chart.configure_mesh().x_desc("t [s]").y_desc(ylabel).light_line_style(WHITE).draw().map_err(err)?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(1)))
            .map_err(err)?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    if series.len() > 1 {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(err)?;
    }
    Ok(())
}

fn col(tr: &SimTrace, name: &str) -> Vec<f64> {
    tr.column(name).unwrap_or_default()
}

/// Three stacked panels for one run.
pub fn run_panels(tr: &SimTrace, path: &Path) -> Result<(), CliError> {
    let t = col(tr, "t");
    let t_end = t.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let e: Vec<f64> = col(tr, "q_true").iter().zip(col(tr, "r")).map(|(q, r)| q - r).collect();
    let root = SVGBackend::new(path, (1000, 1100)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let areas = root.split_evenly((4, 1));
    panel(
        &areas[0],
        "position",
        "m",
        t_end,
        &[("r".into(), decimate(&t, &col(tr, "r"))), ("q".into(), decimate(&t, &col(tr, "q_true")))],
    )?;
    panel(&areas[1], "tracking error", "m", t_end, &[("e1".into(), decimate(&t, &e))])?;
    panel(
        &areas[2],
        "load pressure",
        "Pa",
        t_end,
        &[("P".into(), decimate(&t, &col(tr, "p_true")))],
    )?;
    let split = areas[3].split_evenly((1, 2));
    panel(&split[0], "control", "u", t_end, &[("u".into(), decimate(&t, &col(tr, "u")))])?;
    panel(&split[1], "sliding variable", "s", t_end, &[("s".into(), decimate(&t, &col(tr, "s")))])?;
    root.present().map_err(err)?;
    Ok(())
}

/// Position, error and control of several runs on shared axes.
pub fn overlay(runs: &[(String, &SimTrace)], path: &Path) -> Result<(), CliError> {
    let t_end = runs
        .iter()
        .filter_map(|(_, tr)| col(tr, "t").last().copied())
        .fold(f64::MIN_POSITIVE, f64::max);
    let root = SVGBackend::new(path, (1000, 900)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let areas = root.split_evenly((3, 1));
    let mut pos = Vec::new();
    let mut errs = Vec::new();
    let mut ctrl = Vec::new();
    if let Some((_, first)) = runs.first() {
        pos.push(("r".to_string(), decimate(&col(first, "t"), &col(first, "r"))));
    }
    for (name, tr) in runs {
        let t = col(tr, "t");
        let e: Vec<f64> = col(tr, "q_true").iter().zip(col(tr, "r")).map(|(q, r)| q - r).collect();
        pos.push((name.clone(), decimate(&t, &col(tr, "q_true"))));
        errs.push((name.clone(), decimate(&t, &e)));
        ctrl.push((name.clone(), decimate(&t, &col(tr, "u"))));
    }
    panel(&areas[0], "position", "m", t_end, &pos)?;
    panel(&areas[1], "tracking error", "m", t_end, &errs)?;
    panel(&areas[2], "control", "u", t_end, &ctrl)?;
    root.present().map_err(err)?;
    Ok(())
}
