//! Point-wise F1 against its point-adjusted variants on a hand-made score trace.

use latad::evaluation::{evaluate_all, pa_percent_k, point_adjust, segments_from_labels, EvalReport, Metric};
use latad::scoring::{predict_labels, search_threshold};

fn main() -> anyhow::Result<()> {
    // Two anomaly segments; the detector only fires once inside the first.
    let y: Vec<u8> = (0..60).map(|t| u8::from((10..20).contains(&t) || (40..48).contains(&t))).collect();
    let scores: Vec<f64> = (0..60)
        .map(|t| match t {
            12 => 0.9,
            41..=46 => 0.7,
            _ => 0.1 + 0.002 * t as f64,
        })
        .collect();
    let validation = vec![0.1, 0.15, 0.12];

    let segments = segments_from_labels(&y);
    let y_hat = predict_labels(&scores, 0.5);
    println!("segments: {segments:?}");
    println!("raw hits      {}", y_hat.iter().filter(|&&v| v == 1).count());
    println!("PA hits       {}", point_adjust(&y_hat, &segments).iter().filter(|&&v| v == 1).count());
    println!("PA%50 hits    {}", pa_percent_k(&y_hat, &segments, 50.0).iter().filter(|&&v| v == 1).count());

    for metric in [Metric::F1, Metric::F1_PA50, Metric::F1Pa] {
        let choice = search_threshold(&scores, &y, &validation, metric)?;
        println!("{:<8} best threshold {:.3} -> {:.3}", metric.name(), choice.threshold, choice.value);
    }

    let report = evaluate_all(&scores, &y, &validation)?;
    println!("{}", EvalReport::table_header());
    println!("{}", report.table_row("toy"));
    Ok(())
}
