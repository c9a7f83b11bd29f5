//! End-to-end run on the built-in synthetic data: preprocess, train, score, evaluate.
//!
//! `cargo run --release --example synthetic_pipeline`

use latad::config::ExperimentConfig;
use latad::evaluation::EvalReport;
use latad::runner::run_pipeline;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default().with_overrides(&[
        "preprocess.downsample=1".into(),
        "preprocess.window=32".into(),
        "preprocess.train_stride=16".into(),
        "extractor.d_model=32".into(),
        "train.samples=2".into(),
        "train.max_epoch=5".into(),
    ])?;
    let out = run_pipeline(&cfg)?;
    for rec in &out.history {
        println!("epoch {:>2}  loss {:.4}", rec.epoch, rec.total);
    }
    let report = out.report.expect("synthetic test split is labeled");
    println!("{}", EvalReport::table_header());
    println!("{}", report.table_row("synthetic"));
    if let Some(a) = report.auroc {
        println!("point AUROC {a:.3}");
    }
    Ok(())
}
