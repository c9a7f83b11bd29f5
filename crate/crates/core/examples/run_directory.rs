//! The staged workflow behind the CLI: each step reads and writes a run directory.

use latad::config::ExperimentConfig;
use latad::runner::{cmd_diagnose, cmd_evaluate, cmd_preprocess, cmd_score, cmd_train, RunDir, RunManifest};

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default().with_overrides(&[
        "data.synthetic.train_len=2000".into(),
        "preprocess.downsample=1".into(),
        "preprocess.window=16".into(),
        "preprocess.train_stride=16".into(),
        "extractor.d_model=8".into(),
        "train.samples=2".into(),
        "train.max_epoch=2".into(),
    ])?;
    let root = std::env::temp_dir().join("latad-run-example");
    let dir = RunDir::new(&root);

    cmd_preprocess(&cfg, &dir)?;
    let history = cmd_train(&cfg, &dir)?;
    cmd_score(&cfg, &dir)?;
    let report = cmd_evaluate(&cfg, &dir)?;
    let causes = cmd_diagnose(&cfg, &dir, None)?;

    println!("trained {} epochs", history.len());
    if let Some(r) = report {
        println!("deployment threshold {:.4}", r.deployment_threshold);
    }
    println!("top features: {:?}", causes.ranked.iter().map(|r| r.name.as_deref().unwrap_or("?")).collect::<Vec<_>>());
    if let Some(m) = RunManifest::load(&dir.manifest())? {
        for (name, rec) in &m.commands {
            println!("{name:<10} {} ({} artifacts)", rec.status, rec.artifacts.len());
        }
    }
    println!("artifacts in {}", root.display());
    Ok(())
}
