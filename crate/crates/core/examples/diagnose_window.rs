//! Rank the features behind one anomalous window by input gradients.

use latad::config::ExperimentConfig;
use latad::diagnosis::diagnose_window;
use latad::runner::run_pipeline;
use ndarray::s;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default().with_overrides(&[
        "preprocess.downsample=1".into(),
        "preprocess.window=32".into(),
        "preprocess.train_stride=16".into(),
        "extractor.d_model=16".into(),
        "train.samples=2".into(),
        "train.max_epoch=3".into(),
    ])?;
    let out = run_pipeline(&cfg)?;
    let w = cfg.preprocess.window;

    // The highest-scoring test window.
    let end = (w - 1..out.test_scores.len())
        .max_by(|&a, &b| out.test_scores[a].total_cmp(&out.test_scores[b]))
        .expect("test split longer than one window");
    let x = out.data.test.values.slice(s![end + 1 - w..=end, ..]);
    let (grads, report) = diagnose_window(&out.model.extractor, &out.model.store, &out.reference, x, cfg.diagnosis.top_k)?;
    let report = report.with_names(&out.data.test.feature_names);

    println!("window ending at {end}, score {:.4}", out.test_scores[end]);
    println!("max |g| = {:.3e}", grads.g.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    for r in &report.ranked {
        let name = r.name.clone().unwrap_or_else(|| format!("feature {}", r.index));
        println!("  {name:<12} dominant at {:>2} of {w} steps", r.count);
    }
    Ok(())
}
