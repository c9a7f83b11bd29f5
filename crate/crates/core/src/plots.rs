//! Static SVG figures: score trace, feature correlation heatmap, feature trends.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use plotters::prelude::*;

use crate::error::{Error, Result};

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn range_of(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Score per timestamp, the threshold as a horizontal line, and labeled
/// anomalies shaded.
pub fn score_trace(path: &Path, scores: &[f64], threshold: f64, labels: Option<&[u8]>) -> Result<()> {
    ensure_parent(path)?;
    let root = SVGBackend::new(path, (1000, 360)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let n = scores.len().max(2);
    let (lo, hi) = range_of(scores.iter().copied().chain([threshold]));
    let mut chart = ChartBuilder::on(&root)
        .caption("anomaly score", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(0..n, lo..hi)
        .map_err(plot_err)?;
    chart.configure_mesh().disable_mesh().draw().map_err(plot_err)?;
    if let Some(labels) = labels {
        let shade = RGBColor(255, 200, 200).filled();
        chart
            .draw_series(
                labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l == 1)
                    .map(|(t, _)| Rectangle::new([(t, lo), (t + 1, hi)], shade)),
            )
            .map_err(plot_err)?;
    }
    chart
        .draw_series(LineSeries::new(scores.iter().copied().enumerate(), &BLUE))
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new([(0, threshold), (n, threshold)], &RED))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Pearson correlation between columns. Constant columns correlate 0 with
/// everything except themselves.
pub fn pearson_matrix(values: ArrayView2<f64>) -> Array2<f64> {
    let d = values.ncols();
    let n = values.nrows() as f64;
    let centered: Vec<Vec<f64>> = values
        .columns()
        .into_iter()
        .map(|c| {
            let m = c.sum() / n;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j {
            return 1.0;
        }
        let denom = norms[i] * norms[j];
        if denom == 0.0 {
            return 0.0;
        }
        let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
        (dot / denom).clamp(-1.0, 1.0)
    })
}

fn diverging(r: f64) -> RGBColor {
    let t = r.clamp(-1.0, 1.0);
    let fade = |a: f64| (255.0 * (1.0 - a.abs())) as u8;
    if t >= 0.0 {
        RGBColor(255, fade(t), fade(t))
    } else {
        RGBColor(fade(t), fade(t), 255)
    }
}

pub fn correlation_heatmap(path: &Path, corr: ArrayView2<f64>, names: &[String]) -> Result<()> {
    ensure_parent(path)?;
    let d = corr.nrows();
    let side = (40 + 14 * d as u32).clamp(300, 1600);
    let root = SVGBackend::new(path, (side + 120, side + 80)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("feature correlation", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(60)
        .y_label_area_size(110)
        .build_cartesian_2d(0..d, 0..d)
        .map_err(plot_err)?;
    let label = |i: &usize| names.get(*i).cloned().unwrap_or_default();
    chart
        .configure_mesh()
        .disable_mesh()
        .x_labels(d.min(40))
        .y_labels(d.min(40))
        .x_label_formatter(&label)
        .y_label_formatter(&label)
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series((0..d).flat_map(|i| {
            (0..d).map(move |j| Rectangle::new([(i, j), (i + 1, j + 1)], diverging(corr[[i, j]]).filled()))
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// One panel per selected feature showing its values over the window.
pub fn trend_plots(path: &Path, window: ArrayView2<f64>, features: &[usize], names: &[String]) -> Result<()> {
    ensure_parent(path)?;
    let panels = features.len().max(1);
    let root = SVGBackend::new(path, (900, 180 * panels as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let areas = root.split_evenly((panels, 1));
    for (area, &j) in areas.iter().zip(features) {
        let col = window.column(j);
        let (lo, hi) = range_of(col.iter().copied());
        let title = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
        let mut chart = ChartBuilder::on(area)
            .caption(title, ("sans-serif", 14))
            .margin(6)
            .x_label_area_size(20)
            .y_label_area_size(50)
            .build_cartesian_2d(0..window.nrows().max(2), lo..hi)
            .map_err(plot_err)?;
        chart.configure_mesh().disable_mesh().draw().map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(col.iter().copied().enumerate(), &BLACK))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_features_correlate_fully() {
        let x = Array2::from_shape_fn((50, 3), |(t, j)| match j {
            0 | 1 => (t as f64 * 0.3).sin(),
            _ => 2.0,
        });
        let c = pearson_matrix(x.view());
        assert!((c[[0, 1]] - 1.0).abs() < 1e-12);
        assert_eq!(c[[0, 2]], 0.0);
    }

    #[test]
    fn figures_render() {
        let dir = tempfile::tempdir().unwrap();
        let x = Array2::from_shape_fn((40, 3), |(t, j)| (t as f64 * 0.2 + j as f64).sin());
        let names: Vec<String> = (0..3).map(|j| format!("s{j}")).collect();
        score_trace(&dir.path().join("a.svg"), &[0.1, 0.5, 0.2], 0.3, Some(&[0, 1, 0])).unwrap();
        correlation_heatmap(&dir.path().join("b.svg"), pearson_matrix(x.view()).view(), &names).unwrap();
        trend_plots(&dir.path().join("c.svg"), x.view(), &[2, 0], &names).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("b.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
    }
}
