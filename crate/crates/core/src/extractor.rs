//! Window-to-latent feature extractor.
//!
//! A `w×d` window goes through a same-padded 1-D convolution; its output feeds
//! a graph-attention layer over features and a transformer encoder over time in
//! parallel. The three `w×d` maps are concatenated and fused by a causal dilated
//! TCN whose last timestep is the latent feature `z`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Bound, ParamId, ParamStore, Tape, Var};

/// Architecture hyperparameters of the extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    /// Window length.
    pub window: usize,
    /// Number of input features (sensors).
    pub features: usize,
    pub d_model: usize,
    pub conv_kernel: usize,
    pub transformer_layers: usize,
    pub transformer_heads: usize,
    /// Hidden width of the transformer feed-forward sublayer, as a multiple of `d_model`.
    pub ff_mult: usize,
    pub tcn_levels: usize,
    pub tcn_kernel: usize,
    pub leaky_slope: f64,
    pub seed: u64,
    pub use_gat: bool,
    pub use_transformer: bool,
    pub use_tcn: bool,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            window: 100,
            features: 1,
            d_model: 128,
            conv_kernel: 5,
            transformer_layers: 2,
            transformer_heads: 4,
            ff_mult: 2,
            tcn_levels: 4,
            tcn_kernel: 3,
            leaky_slope: 0.2,
            seed: 0,
            use_gat: true,
            use_transformer: true,
            use_tcn: true,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.features == 0 {
            return Err(Error::config("window and features must be positive"));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(Error::config(format!(
                "conv_kernel must be odd, got {}",
                self.conv_kernel
            )));
        }
        if self.d_model == 0 {
            return Err(Error::config("d_model must be at least 1"));
        }
        if self.tcn_levels == 0 || self.tcn_kernel == 0 {
            return Err(Error::config("tcn_levels and tcn_kernel must be at least 1"));
        }
        if self.use_transformer
            && (self.transformer_heads == 0 || self.d_model % self.transformer_heads != 0)
        {
            return Err(Error::config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.transformer_heads
            )));
        }
        Ok(())
    }

    /// Number of trailing rows of the fused input that can influence `z`.
    pub fn receptive_field(&self) -> usize {
        1 + (self.tcn_kernel - 1) * (0..self.tcn_levels).map(|l| 1usize << l).sum::<usize>()
    }

    /// Names of disabled submodules, for run metadata.
    pub fn disabled_modules(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.use_gat {
            out.push("gat");
        }
        if !self.use_transformer {
            out.push("transformer");
        }
        if !self.use_tcn {
            out.push("tcn");
        }
        out
    }

    fn fused_width(&self) -> usize {
        self.features * (1 + usize::from(self.use_gat) + usize::from(self.use_transformer))
    }
}

/// Latent representation of one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentFeature {
    pub z: Vec<f64>,
}

impl LatentFeature {
    pub fn norm(&self) -> f64 {
        self.z.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug)]
struct Affine {
    weight: ParamId,
    bias: ParamId,
}

impl Affine {
    fn new(
        store: &mut ParamStore,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            weight: store.add_uniform(format!("{prefix}.weight"), (fan_in, fan_out), fan_in, rng),
            bias: store.add_zeros(format!("{prefix}.bias"), (1, fan_out)),
        }
    }

    fn apply(&self, tape: &mut Tape, p: &Bound, x: Var) -> Var {
        let y = tape.matmul(x, p[self.weight]);
        tape.add_row(y, p[self.bias])
    }
}

#[derive(Clone, Debug)]
struct LayerNormParams {
    gamma: ParamId,
    beta: ParamId,
}

impl LayerNormParams {
    fn new(store: &mut ParamStore, prefix: &str, width: usize) -> Self {
        Self {
            gamma: store.add_ones(format!("{prefix}.gamma"), (1, width)),
            beta: store.add_zeros(format!("{prefix}.beta"), (1, width)),
        }
    }

    fn apply(&self, tape: &mut Tape, p: &Bound, x: Var) -> Var {
        tape.layer_norm(x, p[self.gamma], p[self.beta])
    }
}

#[derive(Clone, Debug)]
struct EncoderLayer {
    query: Affine,
    key: Affine,
    value: Affine,
    out: Affine,
    norm1: LayerNormParams,
    ff1: Affine,
    ff2: Affine,
    norm2: LayerNormParams,
}

#[derive(Clone, Debug)]
struct TcnLevel {
    conv: Affine,
    dilation: usize,
    downsample: Option<ParamId>,
}

/// Parameter handles of the four extractor submodules.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    config: ExtractorConfig,
    conv: Affine,
    gat_attention: Option<ParamId>,
    embed: Option<Affine>,
    layers: Vec<EncoderLayer>,
    temporal_out: Option<Affine>,
    tcn: Vec<TcnLevel>,
    head: Option<Affine>,
    positional: Option<Array2<f64>>,
}

/// Intermediate tape nodes of one extractor pass.
#[derive(Clone, Debug)]
pub struct ExtractorTrace {
    pub h_conv: Var,
    pub h_feat: Option<Var>,
    pub gat_alpha: Option<Var>,
    pub h_temp: Option<Var>,
    /// Softmax matrices, layer-major then head-major.
    pub attention: Vec<Var>,
    pub fused: Var,
    pub tcn_outputs: Vec<Var>,
    pub z: Var,
}

impl FeatureExtractor {
    /// Registers all extractor parameters under `extractor.*`.
    pub fn new(config: ExtractorConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (w, d, dm) = (config.window, config.features, config.d_model);
        let k = config.conv_kernel;
        let conv = Affine::new(store, "extractor.conv", k * d, d, rng);

        let gat_attention = config
            .use_gat
            .then(|| store.add_uniform("extractor.gat.attention", (2 * w, 1), 2 * w, rng));

        let (embed, layers, temporal_out, positional) = if config.use_transformer {
            let embed = Affine::new(store, "extractor.transformer.embed", d, dm, rng);
            let ff = config.ff_mult.max(1) * dm;
            let layers = (0..config.transformer_layers)
                .map(|l| {
                    let pre = format!("extractor.transformer.layer{l}");
                    EncoderLayer {
                        query: Affine::new(store, &format!("{pre}.query"), dm, dm, rng),
                        key: Affine::new(store, &format!("{pre}.key"), dm, dm, rng),
                        value: Affine::new(store, &format!("{pre}.value"), dm, dm, rng),
                        out: Affine::new(store, &format!("{pre}.out"), dm, dm, rng),
                        norm1: LayerNormParams::new(store, &format!("{pre}.norm1"), dm),
                        ff1: Affine::new(store, &format!("{pre}.ff1"), dm, ff, rng),
                        ff2: Affine::new(store, &format!("{pre}.ff2"), ff, dm, rng),
                        norm2: LayerNormParams::new(store, &format!("{pre}.norm2"), dm),
                    }
                })
                .collect();
            let out = Affine::new(store, "extractor.transformer.out", dm, d, rng);
            (Some(embed), layers, Some(out), Some(sinusoidal_encoding(w, dm)))
        } else {
            (None, Vec::new(), None, None)
        };

        let fused = config.fused_width();
        let (tcn, head) = if config.use_tcn {
            let mut levels = Vec::with_capacity(config.tcn_levels);
            let mut in_ch = fused;
            for l in 0..config.tcn_levels {
                let pre = format!("extractor.tcn.level{l}");
                let conv = Affine::new(
                    store,
                    &format!("{pre}.conv"),
                    config.tcn_kernel * in_ch,
                    dm,
                    rng,
                );
                let downsample = (in_ch != dm).then(|| {
                    store.add_uniform(format!("{pre}.downsample"), (in_ch, dm), in_ch, rng)
                });
                levels.push(TcnLevel {
                    conv,
                    dilation: 1 << l,
                    downsample,
                });
                in_ch = dm;
            }
            (levels, None)
        } else {
            (Vec::new(), Some(Affine::new(store, "extractor.head", fused, dm, rng)))
        };

        Ok(Self {
            config,
            conv,
            gat_attention,
            embed,
            layers,
            temporal_out,
            tcn,
            head,
            positional,
        })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    pub fn check_window(&self, x: ArrayView2<f64>) -> Result<()> {
        let want = (self.config.window, self.config.features);
        if x.dim() != want {
            return Err(Error::shape(format!(
                "window is {:?}, extractor expects {:?}",
                x.dim(),
                want
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("window contains non-finite values"));
        }
        Ok(())
    }

    /// Same-padded convolution over time followed by ReLU; `w×d -> w×d`.
    pub fn conv1d_forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Var {
        let k = self.config.conv_kernel as isize;
        let half = k / 2;
        let taps: Vec<Var> = (0..k).map(|j| tape.shift_rows(x, j - half)).collect();
        let cols = tape.concat_cols(&taps);
        let y = self.conv.apply(tape, p, cols);
        tape.relu(y)
    }

    /// Graph attention over the feature columns of `h`. Returns `(h_feat, alpha)`.
    pub fn gat_forward(&self, tape: &mut Tape, p: &Bound, h: Var) -> Option<(Var, Var)> {
        let attention = p[self.gat_attention?];
        let w = self.config.window;
        let a_src = tape.slice_rows(attention, 0, w);
        let a_dst = tape.slice_rows(attention, w, w);
        let ht = tape.transpose(h);
        let s_src = tape.matmul(ht, a_src);
        let s_dst = tape.matmul(ht, a_dst);
        let s_dst = tape.transpose(s_dst);
        let e = tape.outer_sum(s_src, s_dst);
        let e = tape.leaky_relu(e, self.config.leaky_slope);
        let alpha = tape.softmax_rows(e);
        let at = tape.transpose(alpha);
        let mixed = tape.matmul(h, at);
        Some((tape.sigmoid(mixed), alpha))
    }

    /// Transformer encoder over the time axis. Returns `(h_temp, attention matrices)`.
    pub fn transformer_encode(
        &self,
        tape: &mut Tape,
        p: &Bound,
        h: Var,
    ) -> Option<(Var, Vec<Var>)> {
        let embed = self.embed.as_ref()?;
        let dm = self.config.d_model;
        let heads = self.config.transformer_heads;
        let dk = dm / heads;
        let scale = 1.0 / (dk as f64).sqrt();

        let u = embed.apply(tape, p, h);
        let pe = tape.constant(self.positional.clone().expect("positional encoding"));
        let mut u = tape.add(u, pe);
        let mut attention = Vec::with_capacity(self.layers.len() * heads);
        for layer in &self.layers {
            let q = layer.query.apply(tape, p, u);
            let k = layer.key.apply(tape, p, u);
            let v = layer.value.apply(tape, p, u);
            let mut head_out = Vec::with_capacity(heads);
            for hd in 0..heads {
                let qh = tape.slice_cols(q, hd * dk, dk);
                let kh = tape.slice_cols(k, hd * dk, dk);
                let vh = tape.slice_cols(v, hd * dk, dk);
                let (o, probs) = scaled_dot_attention(tape, qh, kh, vh, scale);
                attention.push(probs);
                head_out.push(o);
            }
            let merged = if heads == 1 {
                head_out[0]
            } else {
                tape.concat_cols(&head_out)
            };
            let a = layer.out.apply(tape, p, merged);
            let r = tape.add(u, a);
            let u1 = layer.norm1.apply(tape, p, r);
            let f = layer.ff1.apply(tape, p, u1);
            let f = tape.relu(f);
            let f = layer.ff2.apply(tape, p, f);
            let r = tape.add(u1, f);
            u = layer.norm2.apply(tape, p, r);
        }
        let out = self
            .temporal_out
            .as_ref()
            .expect("output projection")
            .apply(tape, p, u);
        Some((out, attention))
    }

    /// Concatenates the submodule maps and reduces them to `z` (`1×d_model`).
    /// Also returns the per-level TCN activations.
    pub fn tcn_fuse(&self, tape: &mut Tape, p: &Bound, parts: &[Var]) -> (Var, Var, Vec<Var>) {
        let fused = if parts.len() == 1 {
            parts[0]
        } else {
            tape.concat_cols(parts)
        };
        let last = self.config.window - 1;
        if let Some(head) = &self.head {
            let row = tape.slice_rows(fused, last, 1);
            return (fused, head.apply(tape, p, row), Vec::new());
        }
        let k = self.config.tcn_kernel;
        let mut x = fused;
        let mut levels = Vec::with_capacity(self.tcn.len());
        for level in &self.tcn {
            let taps: Vec<Var> = (0..k)
                .map(|j| tape.shift_rows(x, -(((k - 1 - j) * level.dilation) as isize)))
                .collect();
            let cols = if taps.len() == 1 {
                taps[0]
            } else {
                tape.concat_cols(&taps)
            };
            let y = level.conv.apply(tape, p, cols);
            let y = tape.relu(y);
            let residual = match level.downsample {
                Some(id) => tape.matmul(x, p[id]),
                None => x,
            };
            x = tape.add(y, residual);
            levels.push(x);
        }
        let z = tape.slice_rows(x, last, 1);
        (fused, z, levels)
    }

    /// Full forward pass for one window node of shape `w×d`.
    pub fn forward_traced(&self, tape: &mut Tape, p: &Bound, x: Var) -> ExtractorTrace {
        let h_conv = self.conv1d_forward(tape, p, x);
        let mut parts = vec![h_conv];
        let gat = self.gat_forward(tape, p, h_conv);
        if let Some((h_feat, _)) = gat {
            parts.push(h_feat);
        }
        let temporal = self.transformer_encode(tape, p, h_conv);
        if let Some((h_temp, _)) = &temporal {
            parts.push(*h_temp);
        }
        let (fused, z, tcn_outputs) = self.tcn_fuse(tape, p, &parts);
        ExtractorTrace {
            h_conv,
            h_feat: gat.map(|g| g.0),
            gat_alpha: gat.map(|g| g.1),
            h_temp: temporal.as_ref().map(|t| t.0),
            attention: temporal.map(|t| t.1).unwrap_or_default(),
            fused,
            tcn_outputs,
            z,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Var {
        self.forward_traced(tape, p, x).z
    }

    /// Latent feature of a single window.
    pub fn extract(&self, store: &ParamStore, window: ArrayView2<f64>) -> Result<LatentFeature> {
        self.check_window(window)?;
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.constant(window.to_owned());
        let z = self.forward(&mut tape, &p, x);
        Ok(LatentFeature {
            z: tape.value(z).iter().copied().collect(),
        })
    }

    pub fn extract_all<'a>(
        &self,
        store: &ParamStore,
        windows: impl IntoIterator<Item = ArrayView2<'a, f64>>,
    ) -> Result<Vec<LatentFeature>> {
        windows
            .into_iter()
            .map(|w| self.extract(store, w))
            .collect()
    }
}

/// `softmax(q kᵀ · scale) v`; returns the output and the probability matrix.
pub fn scaled_dot_attention(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    scale: f64,
) -> (Var, Var) {
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt);
    let scores = tape.scale(scores, scale);
    let probs = tape.softmax_rows(scores);
    (tape.matmul(probs, v), probs)
}

/// Fixed sine/cosine positional encoding, `len×width`.
pub fn sinusoidal_encoding(len: usize, width: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, width), |(t, i)| {
        let pair = (i / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * pair / width as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
