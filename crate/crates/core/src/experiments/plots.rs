use std::path::Path;

use plotters::prelude::*;

use super::report::SweepReport;
use crate::error::{Error, Result};
use crate::transforms::PhaseSpaceMeasure;

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Format(format!("plot: {e}"))
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Log–log plot of the measured column against `ℏ`, one series per `(T, p, shift)` group,
/// with dashed bound lines where rows carry a bound and a `sqrt(ℏ)` reference line.
pub fn plot_scaling(report: &SweepReport, path: &Path) -> Result<()> {
    let rows: Vec<_> = report.rows.iter().filter(|r| r.measured > 0.0 && r.t > 0.0).collect();
    if rows.is_empty() {
        return Ok(());
    }
    let (mut h_lo, mut h_hi) = (f64::INFINITY, 0.0f64);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, 0.0f64);
    for r in &rows {
        h_lo = h_lo.min(r.hbar);
        h_hi = h_hi.max(r.hbar);
        for y in [Some(r.measured), r.bound].into_iter().flatten() {
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    let root = SVGBackend::new(path, (720, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{} ({:?})", report.scenario.name, report.check), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((h_lo / 1.5..h_hi * 1.5).log_scale(), (y_lo / 2.0..y_hi * 2.0).log_scale())
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("hbar").y_desc("measured").draw().map_err(plot_err)?;
    let mut labels: Vec<String> = Vec::new();
    for r in &rows {
        let l = series_label(r);
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    for (i, l) in labels.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = rows.iter().filter(|r| series_label(r) == *l).map(|r| (r.hbar, r.measured)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(l.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart.draw_series(pts.iter().map(|p| Circle::new(*p, 3, color.filled()))).map_err(plot_err)?;
        let mut bounds: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| series_label(r) == *l)
            .filter_map(|r| r.bound.map(|b| (r.hbar, b)))
            .collect();
        bounds.sort_by(|a, b| a.0.total_cmp(&b.0));
        if bounds.len() > 1 {
            chart.draw_series(DashedLineSeries::new(bounds, 6, 4, color.stroke_width(1))).map_err(plot_err)?;
        }
    }
    let anchor = rows.iter().max_by(|a, b| a.hbar.total_cmp(&b.hbar)).expect("nonempty");
    let c = anchor.measured / anchor.hbar.sqrt();
    chart
        .draw_series(DashedLineSeries::new([(h_lo, c * h_lo.sqrt()), (h_hi, c * h_hi.sqrt())], 3, 3, BLACK.stroke_width(1)))
        .map_err(plot_err)?
        .label("sqrt(hbar)")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLACK));
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

fn series_label(r: &super::report::SweepRow) -> String {
    let mut l = format!("T={}", r.t);
    if let Some(p) = r.p {
        l.push_str(&format!(" p={p}"));
    }
    if let Some(s) = r.shift {
        l.push_str(&format!(" shift={s}"));
    }
    l
}

/// Heatmap of a one-dimensional lattice measure (densities, linear color scale).
pub fn plot_husimi(measure: &PhaseSpaceMeasure, title: &str, path: &Path) -> Result<()> {
    let lattice = measure
        .lattice()
        .ok_or_else(|| Error::InvalidInput("heatmaps need a lattice measure".into()))?;
    if lattice.dim() != 1 {
        return Err(Error::Unsupported("heatmaps are drawn for D = 1".into()));
    }
    let density = measure.density().expect("lattice measure");
    let xs = lattice.axis(0);
    let ps = lattice.axis(1);
    let (hx, hp) = (lattice.spacing[0], lattice.spacing[1]);
    let top = density.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let root = SVGBackend::new(path, (640, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(xs[0] - hx..xs[xs.len() - 1] + hx, ps[0] - hp..ps[ps.len() - 1] + hp)
        .map_err(plot_err)?;
    chart.configure_mesh().disable_mesh().x_desc("x").y_desc("p").draw().map_err(plot_err)?;
    chart
        .draw_series((0..lattice.len()).filter(|&i| density[i] > 1e-3 * top).map(|i| {
            let z = lattice.point(i);
            let v = (density[i] / top).clamp(0.0, 1.0);
            let color = HSLColor(0.7 - 0.7 * v, 0.9, 0.25 + 0.45 * v);
            Rectangle::new([(z[0] - hx / 2.0, z[1] - hp / 2.0), (z[0] + hx / 2.0, z[1] + hp / 2.0)], color.filled())
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
