use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use plotters::prelude::*;
use voclab::training::{read_log, LogRecord};

/// Curves of one metric log.
pub struct Series {
    pub label: String,
    pub train: Vec<(f64, f64)>,
    pub validation: Vec<(f64, f64)>,
}

/// Label for a log: its file stem, or the run directory for `metrics.jsonl`.
fn label(path: &Path) -> String {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    match path.parent().and_then(Path::file_name) {
        Some(dir) if stem == "metrics" => dir.to_string_lossy().into_owned(),
        _ => stem.into_owned(),
    }
}

pub fn load_series(path: &Path) -> Result<Series> {
    let records = read_log(path).with_context(|| format!("reading metric log {}", path.display()))?;
    let mut s = Series { label: label(path), train: Vec::new(), validation: Vec::new() };
    for r in records {
        match r {
            LogRecord::Step(m) => s.train.push((m.step as f64, m.loss_mel)),
            LogRecord::Validation(v) => s.validation.push((v.step as f64, v.mel_l1)),
        }
    }
    Ok(s)
}

/// Axis range covering `values`, widened when degenerate.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    (lo - pad, hi + pad)
}

fn panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    series: &[Series],
    pick: fn(&Series) -> &[(f64, f64)],
) -> Result<()>
where
    DB::ErrorType: 'static,
{
    let points = || series.iter().flat_map(|s| pick(s).iter());
    let (x0, x1) = span(points().map(|p| p.0));
    let (y0, y1) = span(points().map(|p| p.1));
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(55)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| anyhow!("{e}"))?;
    chart.configure_mesh().x_desc("step").y_desc("mel L1").draw().map_err(|e| anyhow!("{e}"))?;
    for (i, s) in series.iter().enumerate() {
        let data = pick(s);
        if data.is_empty() {
            continue;
        }
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(data.iter().copied(), color.stroke_width(2)))
            .map_err(|e| anyhow!("{e}"))?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        if data.len() == 1 {
            chart.draw_series(PointSeries::of_element(data.iter().copied(), 4, color.filled(), &|c, s, st| Circle::new(c, s, st)))
                .map_err(|e| anyhow!("{e}"))?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

/// Training loss on top, validation error below, one curve per log.
pub fn draw(series: &[Series], out: &Path) -> Result<()> {
    let root = SVGBackend::new(out, (960, 900)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let areas = root.split_evenly((2, 1));
    panel(&areas[0], "Training mel L1", series, |s| &s.train)?;
    panel(&areas[1], "Validation mel L1", series, |s| &s.validation)?;
    root.present().map_err(|e| anyhow!("writing {}: {e}", out.display()))?;
    Ok(())
}

pub fn run(logs: &[PathBuf], out: &Path) -> Result<()> {
    let series = logs.iter().map(|p| load_series(p)).collect::<Result<Vec<_>>>()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    draw(&series, out)?;
    println!("plotted {} logs to {}", series.len(), out.display());
    Ok(())
}
