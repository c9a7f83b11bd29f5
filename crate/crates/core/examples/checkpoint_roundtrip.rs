//! Train briefly, save a checkpoint, reload it and confirm the scores match.

use latad::checkpoint::{load_checkpoint, save_checkpoint};
use latad::config::ExperimentConfig;
use latad::runner::{fit_reference_for, prepare, score_dataset, train_model};

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
    let (_, data) = prepare(&cfg)?;
    let trained = train_model(&cfg, &data.train)?;

    let dir = std::env::temp_dir().join("latad-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("checkpoint.bin");
    save_checkpoint(&path, &trained.model, &trained.margins, &cfg.hash(), trained.history.len())?;
    let (restored, header) = load_checkpoint(&path)?;
    println!(
        "restored {} tensors after {} epochs, margins {:?}",
        header.tensors.len(),
        header.epochs_completed,
        header.margins
    );

    let reference = fit_reference_for(&cfg, &trained.model, &data.train)?;
    let a = score_dataset(&trained.model, &reference, &data.test)?;
    let b = score_dataset(&restored, &reference, &data.test)?;
    assert_eq!(a, b, "reloaded model must score identically");
    println!("{} test scores identical after reload", a.len());
    Ok(())
}
