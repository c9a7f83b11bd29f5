//! Load one public benchmark from its usual directory layout.
//!
//! `cargo run --example load_benchmark -- SMD /data/SMD`

use std::path::PathBuf;

use anyhow::Context;
use latad::datasets::{load_benchmark, Benchmark};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "SMD".into());
    let root = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/smd"));
    let bench = Benchmark::parse(&name)?;
    let loaded = load_benchmark(bench, &root).with_context(|| format!("loading {name} from {}", root.display()))?;

    let labels = loaded.test.labels.as_deref().unwrap_or_default();
    println!(
        "{}: train {}x{}, test {}x{}, anomaly ratio {:.3}",
        bench.name(),
        loaded.train.len(),
        loaded.train.num_features(),
        loaded.test.len(),
        loaded.test.num_features(),
        labels.iter().filter(|&&v| v == 1).count() as f64 / labels.len().max(1) as f64
    );
    for w in &loaded.warnings {
        println!("warning: {w:?}");
    }
    Ok(())
}
