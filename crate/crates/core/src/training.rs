//! Triplet objectives and the joint training loop.
//!
//! The loss is `L = L_comp + L_sep + λ·L_reg`: positives are pulled toward the
//! anchor, negatives pushed beyond a per-generator margin, and a KL term keeps
//! negatives from drifting too far from positives in feature space.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augmentation::{
    find_neighborhood_eta, mask_diversity, sample_positive_starts, MaskGenerator,
    NeighborhoodConfig, NeighborhoodSpec,
};
use crate::error::{Error, Result};
use crate::extractor::{ExtractorConfig, FeatureExtractor};
use crate::nn::{clip_global_norm, Adam, Bound, ParamStore, Tape, Var};
use crate::preprocessing::window_count;

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epoch: usize,
    pub seed: u64,
    /// Generators per model, which is also the number of positives per anchor.
    pub samples: usize,
    pub grad_clip: f64,
    pub use_comp: bool,
    pub use_reg: bool,
    pub neighborhood: NeighborhoodConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epoch: 20,
            seed: 0,
            samples: 4,
            grad_clip: 5.0,
            use_comp: true,
            use_reg: true,
            neighborhood: NeighborhoodConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::config("lambda must be a finite non-negative number"));
        }
        if self.samples == 0 {
            return Err(Error::config("at least one generator is required"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Draws one margin per generator uniformly from `[0.5, 0.999]`.
pub fn draw_margins(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.5..=0.999)).collect()
}

/// Extractor, generators and their shared parameter store.
#[derive(Clone, Debug)]
pub struct LatadModel {
    pub store: ParamStore,
    pub extractor: FeatureExtractor,
    pub generators: Vec<MaskGenerator>,
}

impl LatadModel {
    /// Initializes all weights from `config.seed`.
    pub fn new(config: &ExtractorConfig, generators: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let extractor = FeatureExtractor::new(config.clone(), &mut store, &mut rng)?;
        let generators = (0..generators)
            .map(|i| {
                MaskGenerator::new(
                    i,
                    config.window,
                    config.features,
                    config.leaky_slope,
                    &mut store,
                    &mut rng,
                )
            })
            .collect();
        Ok(Self {
            store,
            extractor,
            generators,
        })
    }

    pub fn config(&self) -> &ExtractorConfig {
        self.extractor.config()
    }
}

/// Latent features of one anchor and its samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub anchor: Vec<f64>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TripletBatch {
    pub triplets: Vec<Triplet>,
}

impl TripletBatch {
    fn check(&self) -> Result<usize> {
        let n = self
            .triplets
            .first()
            .map(|t| t.positives.len())
            .ok_or_else(|| Error::arg("empty batch"))?;
        for t in &self.triplets {
            if t.positives.len() != n || t.negatives.len() != n || n == 0 {
                return Err(Error::arg("positive and negative counts differ"));
            }
        }
        Ok(n)
    }
}

/// Adjusted cosine distance `(1 - cos(u, v)) / 2`, in `[0, 1]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("vectors differ in length"));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let cos = (dot / (nu * nv)).clamp(-1.0, 1.0);
    Ok((1.0 - cos) / 2.0)
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    z.iter().map(|x| x - lse).collect()
}

/// `KL(softmax(p) ‖ softmax(q))`.
pub fn softmax_kl(p: &[f64], q: &[f64]) -> f64 {
    let lp = log_softmax(p);
    let lq = log_softmax(q);
    lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum::<f64>().max(0.0)
}

pub fn compactness_loss(batch: &TripletBatch) -> Result<f64> {
    let n = batch.check()?;
    let mut total = 0.0;
    for t in &batch.triplets {
        let mut s = 0.0;
        for p in &t.positives {
            s += cosine_distance(&t.anchor, p)?;
        }
        total += s / n as f64;
    }
    Ok(total / batch.triplets.len() as f64)
}

pub fn separateness_loss(batch: &TripletBatch, margins: &[f64]) -> Result<f64> {
    let n = batch.check()?;
    if margins.len() != n {
        return Err(Error::arg(format!(
            "{} margins for {} generators",
            margins.len(),
            n
        )));
    }
    let mut total = 0.0;
    for t in &batch.triplets {
        let mut s = 0.0;
        for i in 0..n {
            let dp = cosine_distance(&t.anchor, &t.positives[i])?;
            let dn = cosine_distance(&t.anchor, &t.negatives[i])?;
            s += (dp - dn + margins[i]).max(0.0);
        }
        total += s / n as f64;
    }
    Ok(total / batch.triplets.len() as f64)
}

/// KL regularizer between softmax-mapped positives and negatives.
pub fn kld_regularizer(batch: &TripletBatch) -> Result<f64> {
    let n = batch.check()?;
    let mut total = 0.0;
    for t in &batch.triplets {
        let s: f64 = (0..n)
            .map(|i| softmax_kl(&t.positives[i], &t.negatives[i]))
            .sum();
        total += s / n as f64;
    }
    Ok(total / batch.triplets.len() as f64)
}

/// Per-term losses of one batch or epoch.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub comp: f64,
    pub sep: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Combines terms, zeroing those disabled by the ablation flags.
    pub fn combine(comp: f64, sep: f64, reg: f64, cfg: &TrainConfig) -> Result<Self> {
        let comp = if cfg.use_comp { comp } else { 0.0 };
        let reg = if cfg.use_reg { reg } else { 0.0 };
        let total = comp + sep + cfg.lambda * reg;
        if !total.is_finite() {
            return Err(Error::Diverged {
                epoch: 0,
                batch: 0,
                detail: format!("comp={comp} sep={sep} reg={reg}"),
            });
        }
        Ok(Self {
            comp,
            sep,
            reg,
            total,
        })
    }
}

pub fn total_loss(batch: &TripletBatch, margins: &[f64], cfg: &TrainConfig) -> Result<LossBreakdown> {
    LossBreakdown::combine(
        compactness_loss(batch)?,
        separateness_loss(batch, margins)?,
        kld_regularizer(batch)?,
        cfg,
    )
}

/// Anchor window with the positives drawn for it.
#[derive(Clone, Debug)]
pub struct TripletWindows {
    pub anchor: Array2<f64>,
    pub positives: Vec<Array2<f64>>,
}

/// Tape nodes of the batch loss terms.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub comp: Var,
    pub sep: Var,
    pub reg: Var,
    pub total: Var,
}

/// Builds the batch objective on `tape`. Negatives are generated from each anchor.
pub fn batch_loss_on_tape(
    model: &LatadModel,
    tape: &mut Tape,
    p: &Bound,
    batch: &[TripletWindows],
    margins: &[f64],
    cfg: &TrainConfig,
) -> LossVars {
    let n = model.generators.len();
    let ex = &model.extractor;
    let mut comp_terms = Vec::new();
    let mut sep_terms = Vec::new();
    let mut reg_terms = Vec::new();
    for tw in batch {
        let x = tape.constant(tw.anchor.clone());
        let z = ex.forward(tape, p, x);
        for (i, g) in model.generators.iter().enumerate() {
            let xp = tape.constant(tw.positives[i].clone());
            let zp = ex.forward(tape, p, xp);
            let xn = g.negative(tape, p, x);
            let zn = ex.forward(tape, p, xn);

            let dp = tape.cosine_distance(z, zp);
            let dn = tape.cosine_distance(z, zn);
            comp_terms.push(dp);

            let gap = tape.sub(dp, dn);
            let eps = tape.constant(Array2::from_elem((1, 1), margins[i]));
            let hinge = tape.add(gap, eps);
            sep_terms.push(tape.relu(hinge));

            let lp = tape.log_softmax_rows(zp);
            let ln = tape.log_softmax_rows(zn);
            let pp = tape.exp(lp);
            let diff = tape.sub(lp, ln);
            let kl = tape.mul(pp, diff);
            reg_terms.push(tape.sum(kl));
        }
    }
    let denom = (batch.len() * n) as f64;
    let mean_of = |terms: &[Var], tape: &mut Tape| {
        let s = tape.add_all(terms);
        tape.scale(s, 1.0 / denom)
    };
    let comp = mean_of(&comp_terms, tape);
    let sep = mean_of(&sep_terms, tape);
    let reg = mean_of(&reg_terms, tape);

    let mut parts = vec![sep];
    if cfg.use_comp {
        parts.push(comp);
    }
    if cfg.use_reg {
        let r = tape.scale(reg, cfg.lambda);
        parts.push(r);
    }
    let total = tape.add_all(&parts);
    LossVars {
        comp,
        sep,
        reg,
        total,
    }
}

/// Mean losses of one epoch, plus the mask-diversity diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub comp: f64,
    pub sep: f64,
    pub reg: f64,
    pub total: f64,
    /// Smallest pairwise Frobenius distance between generator masks on a probe window.
    pub min_mask_distance: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub margins: Vec<f64>,
}

/// Precomputed anchor starts and their neighborhoods.
#[derive(Clone, Debug)]
pub struct AnchorPlan {
    pub starts: Vec<usize>,
    pub neighborhoods: Vec<NeighborhoodSpec>,
}

impl AnchorPlan {
    pub fn build(series: ArrayView2<f64>, window: usize, stride: usize, cfg: &NeighborhoodConfig) -> Result<Self> {
        let count = window_count(series.nrows(), window, stride.max(1));
        if count == 0 {
            return Err(Error::arg(format!(
                "training series of length {} is shorter than the window {window}",
                series.nrows()
            )));
        }
        let starts: Vec<usize> = (0..count).map(|i| i * stride).collect();
        let neighborhoods = starts
            .iter()
            .map(|&s| {
                let center = s + window / 2;
                NeighborhoodSpec {
                    center_t: center,
                    eta: find_neighborhood_eta(series, center, window, cfg),
                    delta: window,
                    adf_pvalue_threshold: cfg.adf_pvalue_threshold,
                }
            })
            .collect();
        Ok(Self {
            starts,
            neighborhoods,
        })
    }
}

fn window_at(series: ArrayView2<f64>, start: usize, w: usize) -> Array2<f64> {
    series.slice(ndarray::s![start..start + w, ..]).to_owned()
}

/// Joint optimization of extractor and generators with Adam.
///
/// On a non-finite loss the update is skipped and [`Error::Diverged`] is
/// returned; `model` then holds the parameters of the last good step.
pub fn fit(
    series: ArrayView2<f64>,
    model: &mut LatadModel,
    cfg: &TrainConfig,
    stride: usize,
) -> Result<TrainOutcome> {
    let outcome = fit_with_history(series, model, cfg, stride, None, |_| {})?;
    Ok(outcome)
}

/// [`fit`] with explicit margins and a per-epoch callback.
pub fn fit_with_history(
    series: ArrayView2<f64>,
    model: &mut LatadModel,
    cfg: &TrainConfig,
    stride: usize,
    margins: Option<Vec<f64>>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let w = model.config().window;
    if series.ncols() != model.config().features {
        return Err(Error::shape(format!(
            "series has {} features, model expects {}",
            series.ncols(),
            model.config().features
        )));
    }
    if model.generators.len() != cfg.samples {
        return Err(Error::config(format!(
            "model has {} generators, config asks for {}",
            model.generators.len(),
            cfg.samples
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let margins = match margins {
        Some(m) if m.len() == cfg.samples => m,
        Some(m) => {
            return Err(Error::config(format!(
                "{} margins for {} generators",
                m.len(),
                cfg.samples
            )))
        }
        None => draw_margins(cfg.samples, &mut rng),
    };
    let plan = AnchorPlan::build(series, w, stride, &cfg.neighborhood)?;
    let probe = window_at(series, plan.starts[0], w);
    let mut opt = Adam::new(&model.store, cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.max_epoch);
    let mut order: Vec<usize> = (0..plan.starts.len()).collect();

    for epoch in 1..=cfg.max_epoch {
        order.shuffle(&mut rng);
        let mut sums = LossBreakdown::default();
        let mut seen = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<TripletWindows> = chunk
                .iter()
                .map(|&a| {
                    let starts =
                        sample_positive_starts(series.nrows(), &plan.neighborhoods[a], cfg.samples, &mut rng);
                    TripletWindows {
                        anchor: window_at(series, plan.starts[a], w),
                        positives: starts.into_iter().map(|s| window_at(series, s, w)).collect(),
                    }
                })
                .collect();

            let mut tape = Tape::new();
            let p = model.store.bind(&mut tape);
            let loss = batch_loss_on_tape(model, &mut tape, &p, &batch, &margins, cfg);
            let terms = [
                tape.scalar(loss.comp),
                tape.scalar(loss.sep),
                tape.scalar(loss.reg),
                tape.scalar(loss.total),
            ];
            if terms.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    detail: format!(
                        "comp={} sep={} reg={} total={}",
                        terms[0], terms[1], terms[2], terms[3]
                    ),
                });
            }
            let grads = tape.backward(loss.total);
            let mut g = model.store.collect_grads(&p, &grads);
            drop(tape);
            if g.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    detail: "non-finite gradient".into(),
                });
            }
            clip_global_norm(&mut g, cfg.grad_clip);
            opt.update(&mut model.store, &g);

            let k = chunk.len() as f64;
            sums.comp += terms[0] * k;
            sums.sep += terms[1] * k;
            sums.reg += terms[2] * k;
            sums.total += terms[3] * k;
            seen += chunk.len();
        }
        let k = seen as f64;
        let diversity = mask_diversity(&model.generators, &model.store, probe.view())?;
        let record = EpochRecord {
            epoch,
            comp: if cfg.use_comp { sums.comp / k } else { 0.0 },
            sep: sums.sep / k,
            reg: if cfg.use_reg { sums.reg / k } else { 0.0 },
            total: sums.total / k,
            min_mask_distance: diversity.iter().copied().fold(f64::INFINITY, f64::min),
        };
        log::info!(
            "epoch {epoch}: total {:.5} (comp {:.5}, sep {:.5}, reg {:.5})",
            record.total,
            record.comp,
            record.sep,
            record.reg
        );
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome { history, margins })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triplet(anchor: &[f64], pos: &[&[f64]], neg: &[&[f64]]) -> Triplet {
        Triplet {
            anchor: anchor.to_vec(),
            positives: pos.iter().map(|v| v.to_vec()).collect(),
            negatives: neg.iter().map(|v| v.to_vec()).collect(),
        }
    }

    #[test]
    fn cosine_distance_cases() {
        assert!(cosine_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap().abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.5);
        assert!(matches!(
            cosine_distance(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn compactness_cases() {
        let b = TripletBatch {
            triplets: vec![triplet(&[1.0, 0.0], &[&[2.0, 0.0]], &[&[0.0, 1.0]])],
        };
        assert_eq!(compactness_loss(&b).unwrap(), 0.0);
        let b = TripletBatch {
            triplets: vec![triplet(&[1.0, 0.0], &[&[0.0, 1.0]], &[&[0.0, 1.0]])],
        };
        assert_eq!(compactness_loss(&b).unwrap(), 0.5);
    }

    #[test]
    fn separateness_cases() {
        // d+ = 0, d- = 1
        let b = TripletBatch {
            triplets: vec![triplet(&[1.0, 0.0], &[&[1.0, 0.0]], &[&[-1.0, 0.0]])],
        };
        assert_eq!(separateness_loss(&b, &[0.5]).unwrap(), 0.0);
        assert!(separateness_loss(&b, &[0.5, 0.6]).is_err());
    }

    #[test]
    fn kl_of_identical_is_zero() {
        let b = TripletBatch {
            triplets: vec![triplet(&[1.0, 0.0], &[&[0.3, -0.2]], &[&[0.3, -0.2]])],
        };
        assert_eq!(kld_regularizer(&b).unwrap(), 0.0);
    }

    #[test]
    fn weighted_sum_and_flags() {
        let cfg = TrainConfig::default();
        let l = LossBreakdown::combine(0.2, 0.3, 1.0, &cfg).unwrap();
        assert!((l.total - 0.6).abs() < 1e-12);
        let no_reg = TrainConfig {
            use_reg: false,
            ..Default::default()
        };
        let l = LossBreakdown::combine(0.2, 0.3, 1.0, &no_reg).unwrap();
        assert_eq!(l.reg, 0.0);
        assert!((l.total - 0.5).abs() < 1e-12);
        let zero = TrainConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert_eq!(LossBreakdown::combine(0.2, 0.3, 1.0, &zero).unwrap().total, 0.2 + 0.3);
        assert!(LossBreakdown::combine(f64::NAN, 0.0, 0.0, &cfg).is_err());
    }

    #[test]
    fn margins_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = draw_margins(1000, &mut rng);
        assert!(m.iter().all(|&e| (0.5..=0.999).contains(&e)));
    }
}
