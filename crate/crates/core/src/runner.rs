//! Orchestration: the in-memory pipeline and the run-directory commands behind the CLI.
//!
//! A run directory holds:
//!
//! ```text
//! config.toml            resolved configuration
//! manifest.json          per-command status, artifact hashes, timings
//! data/                  preprocessed splits (*.ltsc) and stats.json
//! checkpoint.bin         model weights
//! history.csv            epoch, L_comp, L_sep, L_reg, total
//! reference.json         cluster centers
//! scores.csv             timestamp, score, prediction, label
//! validation_scores.csv  timestamp, score
//! report.json, table.txt evaluation
//! root_cause.json/.txt   diagnosis
//! plots/*.svg            figures
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{DataSource, ExperimentConfig};
use crate::datasets::io::{read_columnar, read_csv, write_columnar, write_csv};
use crate::datasets::{load_benchmark, synth_generate, Benchmark, DatasetWarning};
use crate::diagnosis::{diagnose_window, RootCauseReport};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_all, EvalReport, Metric, VariantReport};
use crate::extractor::ExtractorConfig;
use crate::plots::{correlation_heatmap, pearson_matrix, score_trace, trend_plots};
use crate::preprocessing::{
    make_windows, preprocess, NormalizationStats, Preprocessed, Role, TimeSeriesDataset,
};
use crate::scoring::{
    fit_reference, predict_labels, quantile_threshold, score_series, search_threshold, ReferenceModel,
};
use crate::training::{draw_margins, fit_with_history, EpochRecord, LatadModel};

/// Separates the margin draw from the training stream of the same seed.
const MARGIN_STREAM: u64 = 0x6d61_7267_696e;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit code for an error; `0` is success.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::MissingInput { .. } => 3,
        Error::Malformed { .. }
        | Error::Format(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::EmptyColumn(_)
        | Error::Shape(_)
        | Error::OverlappingAnomalies(..) => 4,
        Error::Diverged { .. } => 5,
        Error::NoWindow(_) => 6,
        Error::ZeroVector | Error::Plot(_) | Error::Io(_) => 1,
    }
}

/// Raw train/test splits with loader notes.
pub struct RawData {
    pub name: String,
    pub train: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
    pub warnings: Vec<DatasetWarning>,
    pub metadata: BTreeMap<String, String>,
}

pub fn load_raw(cfg: &ExperimentConfig) -> Result<RawData> {
    match cfg.data.source {
        DataSource::Synthetic => {
            let (train, test) = synth_generate(&cfg.data.synthetic)?;
            Ok(RawData {
                name: "synthetic".into(),
                train,
                test,
                warnings: Vec::new(),
                metadata: BTreeMap::new(),
            })
        }
        DataSource::Benchmark => {
            let b = Benchmark::parse(&cfg.data.benchmark)?;
            let loaded = load_benchmark(b, &cfg.data.benchmark_dir()?)?;
            Ok(RawData {
                name: b.name().into(),
                train: loaded.train,
                test: loaded.test,
                warnings: loaded.warnings,
                metadata: loaded.metadata,
            })
        }
        DataSource::Csv => {
            let need = |p: &Option<PathBuf>, key: &str| {
                p.clone()
                    .ok_or_else(|| Error::config(format!("data.{key} is required for csv input")))
            };
            Ok(RawData {
                name: "csv".into(),
                train: read_csv(&need(&cfg.data.train_csv, "train_csv")?, Role::Train)?,
                test: read_csv(&need(&cfg.data.test_csv, "test_csv")?, Role::Test)?,
                warnings: Vec::new(),
                metadata: BTreeMap::new(),
            })
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<(RawData, Preprocessed)> {
    let raw = load_raw(cfg)?;
    let pre = preprocess(&raw.train, &raw.test, &cfg.preprocess)?;
    Ok((raw, pre))
}

/// Extractor settings for data with `features` columns.
pub fn extractor_config(cfg: &ExperimentConfig, features: usize) -> ExtractorConfig {
    ExtractorConfig {
        features,
        window: cfg.preprocess.window,
        seed: cfg.seed,
        ..cfg.extractor.clone()
    }
}

/// Trained model and the history up to completion or divergence.
pub struct TrainResult {
    pub model: LatadModel,
    pub history: Vec<EpochRecord>,
    pub margins: Vec<f64>,
    pub error: Option<Error>,
}

pub fn train_model(cfg: &ExperimentConfig, train: &TimeSeriesDataset) -> Result<TrainResult> {
    let ecfg = extractor_config(cfg, train.num_features());
    ecfg.validate()?;
    let mut model = LatadModel::new(&ecfg, cfg.train.samples)?;
    let margins = {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.train.seed ^ MARGIN_STREAM);
        draw_margins(cfg.train.samples, &mut rng)
    };
    let mut history = Vec::new();
    let res = fit_with_history(
        train.values.view(),
        &mut model,
        &cfg.train,
        cfg.preprocess.train_stride,
        Some(margins.clone()),
        |r| history.push(r.clone()),
    );
    let error = match res {
        Ok(_) => None,
        Err(e @ Error::Diverged { .. }) => Some(e),
        Err(e) => return Err(e),
    };
    Ok(TrainResult {
        model,
        history,
        margins,
        error,
    })
}

/// Cluster centers over the features of every training window at the scoring stride.
pub fn fit_reference_for(cfg: &ExperimentConfig, model: &LatadModel, train: &TimeSeriesDataset) -> Result<ReferenceModel> {
    let windows = make_windows(train.values.view(), None, cfg.preprocess.window, cfg.preprocess.score_stride)?;
    let feats = model
        .extractor
        .extract_all(&model.store, windows.iter().map(|w| w.data.view()))?;
    fit_reference(&feats, &cfg.scoring)
}

pub fn score_dataset(model: &LatadModel, reference: &ReferenceModel, ds: &TimeSeriesDataset) -> Result<Vec<f64>> {
    score_series(ds.values.view(), &model.extractor, &model.store, reference)
}

/// Everything an in-memory run produces.
pub struct PipelineOutput {
    pub data: Preprocessed,
    pub model: LatadModel,
    pub history: Vec<EpochRecord>,
    pub margins: Vec<f64>,
    pub reference: ReferenceModel,
    pub validation_scores: Vec<f64>,
    pub test_scores: Vec<f64>,
    pub report: Option<EvalReport>,
}

/// Preprocess, train, fit the reference model, score and evaluate without touching disk.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let (_, data) = prepare(cfg)?;
    let trained = train_model(cfg, &data.train)?;
    if let Some(e) = trained.error {
        return Err(e);
    }
    let reference = fit_reference_for(cfg, &trained.model, &data.train)?;
    let validation_scores = score_dataset(&trained.model, &reference, &data.validation)?;
    let test_scores = score_dataset(&trained.model, &reference, &data.test)?;
    let report = match &data.test.labels {
        Some(y) => Some(evaluate_report(cfg, &test_scores, y, &validation_scores)?),
        None => None,
    };
    Ok(PipelineOutput {
        data,
        model: trained.model,
        history: trained.history,
        margins: trained.margins,
        reference,
        validation_scores,
        test_scores,
        report,
    })
}

/// The standard three variants plus any configured extra PA%k percentages.
pub fn evaluate_report(cfg: &ExperimentConfig, scores: &[f64], y: &[u8], val: &[f64]) -> Result<EvalReport> {
    let mut report = evaluate_all(scores, y, val)?;
    for &k in &cfg.evaluation.extra_pa_ks {
        let metric = Metric::F1PaK(k);
        let choice = search_threshold(scores, y, val, metric)?;
        report.variants.push(VariantReport {
            metric: metric.name(),
            threshold: choice.threshold,
            threshold_fallback: choice.fallback,
            scores: metric.evaluate(y, &predict_labels(scores, choice.threshold))?,
        });
    }
    Ok(report)
}

/// Paths inside a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
    pub fn config(&self) -> PathBuf {
        self.path("config.toml")
    }
    pub fn manifest(&self) -> PathBuf {
        self.path("manifest.json")
    }
    pub fn split(&self, role: Role) -> PathBuf {
        let name = match role {
            Role::Train => "train",
            Role::Validation => "validation",
            Role::Test => "test",
        };
        self.path(&format!("data/{name}.ltsc"))
    }
    pub fn stats(&self) -> PathBuf {
        self.path("data/stats.json")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.path("checkpoint.bin")
    }
    pub fn history(&self) -> PathBuf {
        self.path("history.csv")
    }
    pub fn reference(&self) -> PathBuf {
        self.path("reference.json")
    }
    pub fn scores(&self) -> PathBuf {
        self.path("scores.csv")
    }
    pub fn validation_scores(&self) -> PathBuf {
        self.path("validation_scores.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.path("report.json")
    }
    pub fn table(&self) -> PathBuf {
        self.path("table.txt")
    }
    pub fn root_cause(&self) -> PathBuf {
        self.path("root_cause.json")
    }
    pub fn plot(&self, name: &str) -> PathBuf {
        self.path(&format!("plots/{name}.svg"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub status: String,
    pub seconds: f64,
    pub artifacts: Vec<Artifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub commands: BTreeMap<String, CommandRecord>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Option<Self>> {
        match fs::read(path) {
            Ok(b) => Ok(Some(serde_json::from_slice(&b)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Hash of the manifest with timings zeroed.
    pub fn content_hash(&self) -> String {
        let mut m = self.clone();
        for c in m.commands.values_mut() {
            c.seconds = 0.0;
        }
        hex::encode(Sha256::digest(serde_json::to_vec(&m).expect("manifest serializes")))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes through a temporary sibling and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Tracks one command and records it in the manifest when finished.
struct Command<'a> {
    name: &'static str,
    dir: &'a RunDir,
    cfg: &'a ExperimentConfig,
    started: Instant,
    artifacts: Vec<PathBuf>,
    details: BTreeMap<String, serde_json::Value>,
}

impl<'a> Command<'a> {
    fn start(name: &'static str, dir: &'a RunDir, cfg: &'a ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&dir.root)?;
        write_atomic(&dir.config(), cfg.to_toml().as_bytes())?;
        Ok(Self {
            name,
            dir,
            cfg,
            started: Instant::now(),
            artifacts: vec![dir.config()],
            details: BTreeMap::new(),
        })
    }

    fn artifact(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }

    fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details
            .insert(key.into(), serde_json::to_value(value).expect("detail serializes"));
    }

    fn finish<T>(self, result: Result<T>) -> Result<T> {
        let mut manifest = RunManifest::load(&self.dir.manifest())?.unwrap_or_default();
        let hash = self.cfg.hash();
        if !manifest.config_hash.is_empty() && manifest.config_hash != hash {
            log::warn!("config changed since the last command in {}", self.dir.root.display());
        }
        manifest.version = TOOLKIT_VERSION.into();
        manifest.config_hash = hash;
        let mut artifacts = Vec::new();
        for p in &self.artifacts {
            if p.exists() {
                let rel = p.strip_prefix(&self.dir.root).unwrap_or(p);
                artifacts.push(Artifact {
                    path: rel.to_string_lossy().into_owned(),
                    sha256: sha256_file(p)?,
                });
            }
        }
        let record = CommandRecord {
            status: if result.is_ok() { "ok" } else { "failed" }.into(),
            seconds: self.started.elapsed().as_secs_f64(),
            artifacts,
            error: result.as_ref().err().map(|e| e.to_string()),
            details: self.details,
        };
        manifest.commands.insert(self.name.into(), record);
        write_atomic(&self.dir.manifest(), &serde_json::to_vec_pretty(&manifest)?)?;
        result
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct StatsFile {
    dataset: String,
    stats: NormalizationStats,
    warnings: Vec<DatasetWarning>,
    metadata: BTreeMap<String, String>,
}

pub fn cmd_preprocess(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Preprocessed> {
    let mut cmd = Command::start("preprocess", dir, cfg)?;
    let res = (|| {
        cfg.validate()?;
        let (raw, pre) = prepare(cfg)?;
        fs::create_dir_all(dir.path("data"))?;
        for ds in [&pre.train, &pre.validation, &pre.test] {
            let p = dir.split(ds.role);
            write_columnar(ds, &p)?;
            cmd.artifact(p);
        }
        let stats = StatsFile {
            dataset: raw.name,
            stats: pre.stats.clone(),
            warnings: raw.warnings,
            metadata: raw.metadata,
        };
        write_atomic(&dir.stats(), &serde_json::to_vec_pretty(&stats)?)?;
        cmd.artifact(dir.stats());
        cmd.detail("dataset", &stats.dataset);
        cmd.detail("train_len", pre.train.len());
        cmd.detail("test_len", pre.test.len());
        Ok(pre)
    })();
    cmd.finish(res)
}

/// Reads the preprocessed splits of a run directory.
pub fn load_prepared(dir: &RunDir) -> Result<Preprocessed> {
    let stats: StatsFile = serde_json::from_slice(&fs::read(dir.stats()).map_err(|_| Error::MissingInput {
        path: dir.stats(),
        hint: "run `preprocess` first".into(),
    })?)?;
    Ok(Preprocessed {
        train: read_columnar(&dir.split(Role::Train))?,
        validation: read_columnar(&dir.split(Role::Validation))?,
        test: read_columnar(&dir.split(Role::Test))?,
        stats: stats.stats,
    })
}

fn dataset_name(dir: &RunDir) -> String {
    fs::read(dir.stats())
        .ok()
        .and_then(|b| serde_json::from_slice::<StatsFile>(&b).ok())
        .map(|s| s.dataset)
        .unwrap_or_else(|| "unknown".into())
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "L_comp", "L_sep", "L_reg", "total"])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.comp.to_string(),
            r.sep.to_string(),
            r.reg.to_string(),
            r.total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Vec<EpochRecord>> {
    let mut cmd = Command::start("train", dir, cfg)?;
    let res = (|| {
        cfg.validate()?;
        let data = load_prepared(dir)?;
        let trained = train_model(cfg, &data.train)?;
        save_checkpoint(
            &dir.checkpoint(),
            &trained.model,
            &trained.margins,
            &cfg.hash(),
            trained.history.len(),
        )?;
        write_history(&dir.history(), &trained.history)?;
        cmd.artifact(dir.checkpoint());
        cmd.artifact(dir.history());
        cmd.detail("epochs_completed", trained.history.len());
        cmd.detail("margins", &trained.margins);
        cmd.detail("disabled_modules", trained.model.config().disabled_modules());
        if let Some(last) = trained.history.last() {
            cmd.detail("min_mask_distance", last.min_mask_distance);
        }
        match trained.error {
            Some(e) => Err(e),
            None => Ok(trained.history),
        }
    })();
    cmd.finish(res)
}

fn write_scores(path: &Path, ds: &TimeSeriesDataset, scores: &[f64], threshold: Option<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp", "score"];
    if threshold.is_some() {
        header.push("prediction");
    }
    if ds.labels.is_some() {
        header.push("label");
    }
    w.write_record(&header)?;
    for (t, &s) in scores.iter().enumerate() {
        let mut row = vec![ds.timestamps[t].to_string(), s.to_string()];
        if let Some(d) = threshold {
            row.push(u8::from(s > d).to_string());
        }
        if let Some(l) = &ds.labels {
            row.push(l[t].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_score_column(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            rec[1].parse().map_err(|_| Error::Malformed {
                path: path.into(),
                row: i + 2,
                msg: "bad score".into(),
            })
        })
        .collect()
}

/// Test and validation scores of a run.
pub struct ScoredRun {
    pub data: Preprocessed,
    pub test_scores: Vec<f64>,
    pub validation_scores: Vec<f64>,
    /// Best-F1 threshold with labels, otherwise the deployment quantile.
    pub threshold: f64,
}

pub fn cmd_score(cfg: &ExperimentConfig, dir: &RunDir) -> Result<ScoredRun> {
    let mut cmd = Command::start("score", dir, cfg)?;
    let res = (|| {
        let data = load_prepared(dir)?;
        let (model, _) = load_checkpoint(&dir.checkpoint())?;
        let reference = fit_reference_for(cfg, &model, &data.train)?;
        write_atomic(&dir.reference(), &serde_json::to_vec_pretty(&reference)?)?;
        let validation_scores = score_dataset(&model, &reference, &data.validation)?;
        let test_scores = score_dataset(&model, &reference, &data.test)?;
        let threshold = match &data.test.labels {
            Some(y) => search_threshold(&test_scores, y, &validation_scores, Metric::F1)?.threshold,
            None => quantile_threshold(&validation_scores, cfg.scoring.deployment_quantile)?,
        };
        write_scores(&dir.scores(), &data.test, &test_scores, Some(threshold))?;
        write_scores(&dir.validation_scores(), &data.validation, &validation_scores, None)?;
        for p in [dir.reference(), dir.scores(), dir.validation_scores()] {
            cmd.artifact(p);
        }
        cmd.detail("clusters", reference.k());
        cmd.detail("threshold", threshold);
        Ok(ScoredRun {
            data,
            test_scores,
            validation_scores,
            threshold,
        })
    })();
    cmd.finish(res)
}

fn load_or_score(cfg: &ExperimentConfig, dir: &RunDir) -> Result<ScoredRun> {
    if dir.scores().exists() && dir.validation_scores().exists() {
        let data = load_prepared(dir)?;
        let test_scores = read_score_column(&dir.scores())?;
        let validation_scores = read_score_column(&dir.validation_scores())?;
        if test_scores.len() == data.test.len() && validation_scores.len() == data.validation.len() {
            let threshold = quantile_threshold(&validation_scores, cfg.scoring.deployment_quantile)?;
            return Ok(ScoredRun {
                data,
                test_scores,
                validation_scores,
                threshold,
            });
        }
    }
    cmd_score(cfg, dir)
}

/// Content of `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub config_hash: String,
    pub version: String,
    pub deployment_threshold: f64,
    pub evaluation: EvalReport,
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, dir: &RunDir) -> Result<Option<RunReport>> {
    let scored = load_or_score(cfg, dir)?;
    let mut cmd = Command::start("evaluate", dir, cfg)?;
    let res = (|| {
        let data = &scored.data;
        let deployment = quantile_threshold(&scored.validation_scores, cfg.scoring.deployment_quantile)?;
        let names = &data.train.feature_names;
        correlation_heatmap(&dir.plot("correlation"), pearson_matrix(data.train.values.view()).view(), names)?;
        cmd.artifact(dir.plot("correlation"));
        let Some(y) = &data.test.labels else {
            log::warn!("test split has no labels; skipping metrics");
            score_trace(&dir.plot("score_trace"), &scored.test_scores, deployment, None)?;
            cmd.artifact(dir.plot("score_trace"));
            return Ok(None);
        };
        let evaluation = evaluate_report(cfg, &scored.test_scores, y, &scored.validation_scores)?;
        let f1_threshold = evaluation.variant("F1").map_or(deployment, |v| v.threshold);
        score_trace(&dir.plot("score_trace"), &scored.test_scores, f1_threshold, Some(y))?;
        cmd.artifact(dir.plot("score_trace"));
        let name = dataset_name(dir);
        let report = RunReport {
            dataset: name.clone(),
            config_hash: cfg.hash(),
            version: TOOLKIT_VERSION.into(),
            deployment_threshold: deployment,
            evaluation,
        };
        write_atomic(&dir.report(), &serde_json::to_vec_pretty(&report)?)?;
        let table = format!(
            "{}\n{}\n",
            EvalReport::table_header(),
            report.evaluation.table_row(&name)
        );
        write_atomic(&dir.table(), table.as_bytes())?;
        cmd.artifact(dir.report());
        cmd.artifact(dir.table());
        Ok(Some(report))
    })();
    cmd.finish(res)
}

/// Test-split index of the window end chosen by `selector`.
pub fn select_window(selector: &str, ds: &TimeSeriesDataset, scores: &[f64], w: usize) -> Result<usize> {
    if ds.len() < w {
        return Err(Error::NoWindow(selector.into()));
    }
    if selector == "highest-score" {
        let mut best = w - 1;
        for t in w - 1..scores.len() {
            if scores[t] > scores[best] {
                best = t;
            }
        }
        return Ok(best);
    }
    let ts: i64 = selector
        .parse()
        .map_err(|_| Error::config(format!("window selector `{selector}` is neither `highest-score` nor a timestamp")))?;
    match ds.timestamps.iter().position(|&t| t == ts) {
        Some(end) if end + 1 >= w => Ok(end),
        _ => Err(Error::NoWindow(selector.into())),
    }
}

pub fn cmd_diagnose(cfg: &ExperimentConfig, dir: &RunDir, selector: Option<&str>) -> Result<RootCauseReport> {
    let scored = load_or_score(cfg, dir)?;
    let mut cmd = Command::start("diagnose", dir, cfg)?;
    let res = (|| {
        let (model, _) = load_checkpoint(&dir.checkpoint())?;
        let reference: ReferenceModel = serde_json::from_slice(&fs::read(dir.reference())?)?;
        let test = &scored.data.test;
        let w = model.config().window;
        let selector = selector.unwrap_or(&cfg.diagnosis.window);
        let end = select_window(selector, test, &scored.test_scores, w)?;
        let start = end + 1 - w;
        let x = test.values.slice(ndarray::s![start..=end, ..]);
        let top_k = cfg.diagnosis.top_k.min(test.num_features());
        let (_, report) = diagnose_window(&model.extractor, &model.store, &reference, x, top_k)?;
        let mut report = report.with_names(&test.feature_names);
        report.window_start = Some(start);
        write_atomic(&dir.root_cause(), &serde_json::to_vec_pretty(&report)?)?;
        write_atomic(&dir.path("root_cause.txt"), report.render().as_bytes())?;
        let feats: Vec<usize> = report.ranked.iter().map(|r| r.index).collect();
        trend_plots(&dir.plot("trends"), x, &feats, &test.feature_names)?;
        cmd.artifact(dir.root_cause());
        cmd.artifact(dir.path("root_cause.txt"));
        cmd.artifact(dir.plot("trends"));
        cmd.detail("window_end_timestamp", test.timestamps[end]);
        Ok(report)
    })();
    cmd.finish(res)
}

/// Writes the configured synthetic dataset as `train.csv` and `test.csv`.
pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<(PathBuf, PathBuf)> {
    let (train, test) = synth_generate(&cfg.data.synthetic)?;
    fs::create_dir_all(out)?;
    let (a, b) = (out.join("train.csv"), out.join("test.csv"));
    write_csv(&train, &a)?;
    write_csv(&test, &b)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_from_success() {
        let errs = [
            Error::config("x"),
            Error::MissingInput {
                path: "p".into(),
                hint: String::new(),
            },
            Error::Format("f".into()),
            Error::NoWindow("s".into()),
        ];
        let codes: Vec<i32> = errs.iter().map(exit_code).collect();
        assert!(codes.iter().all(|&c| c != 0));
        assert_eq!(codes, vec![2, 3, 4, 6]);
    }

    #[test]
    fn window_selection() {
        let ds = TimeSeriesDataset::from_values(ndarray::Array2::zeros((6, 1)), None, Role::Test);
        let scores = [0.0, 0.0, 0.0, 0.9, 0.1, 0.2];
        assert_eq!(select_window("highest-score", &ds, &scores, 3).unwrap(), 3);
        assert_eq!(select_window("4", &ds, &scores, 3).unwrap(), 4);
        assert!(matches!(select_window("1", &ds, &scores, 3), Err(Error::NoWindow(_))));
        assert!(matches!(select_window("99", &ds, &scores, 3), Err(Error::NoWindow(_))));
    }
}
