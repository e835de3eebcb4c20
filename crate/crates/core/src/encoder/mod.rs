//! Compact BERT-style classifier with swappable feedforward sub-layers.
//!
//! Per layer (post-norm): `h ← LN(h + Attn(h))`, `h ← LN(h + FFN(h))`.
//! The classifier is a single affine map on the final [CLS] row
//! (position 0). Padded positions are masked out of attention, so
//! trailing padding is trimmed before any compute.

mod archive;
pub mod layers;

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use archive::{load_weights, save_weights, ArchiveManifest, TensorEntry};
use layers::{dropout, AttentionCache, ClassicalFfn, FfnCache, LayerNorm, LayerNormCache, Linear, SelfAttention};

use crate::data::EncodedExample;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::params::{gaussian, join, slice_mut, view, ParamSet, TensorView};
use crate::pqc::{PqcConfig, Variant, REFERENCE_DEPTHS};
use crate::qffn::{classical_ffn_param_count, qffn_param_count, QffnBlock, QffnCache, INIT_STD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FfnKind {
    Classical,
    Qffn,
    VanillaQffn,
}

impl FfnKind {
    pub fn name(self) -> &'static str {
        match self {
            FfnKind::Classical => "classical",
            FfnKind::Qffn => "qffn",
            FfnKind::VanillaQffn => "vanilla_qffn",
        }
    }

    pub fn is_quantum(self) -> bool {
        self != FfnKind::Classical
    }
}

fn default_eps() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate: usize,
    pub max_seq_len: usize,
    pub ffn_kind: FfnKind,
    pub pqc_layers: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
}

impl ModelConfig {
    /// Two layers, hidden 128, two heads, intermediate 512, 128 positions.
    pub fn bert_tiny(vocab_size: usize, num_classes: usize, ffn_kind: FfnKind, pqc_layers: usize) -> Self {
        Self {
            vocab_size,
            hidden: 128,
            num_layers: 2,
            num_heads: 2,
            intermediate: 512,
            max_seq_len: 128,
            ffn_kind,
            pqc_layers,
            num_classes,
            dropout: 0.0,
            layer_norm_eps: default_eps(),
        }
    }

    /// `strict_depths` restricts quantum depths to {1, 2, 4, 8}.
    pub fn validate(&self, strict_depths: bool) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("intermediate", self.intermediate),
            ("max_seq_len", self.max_seq_len),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if !self.hidden.is_multiple_of(self.num_heads) {
            return Err(Error::config(
                "num_heads",
                format!("hidden size {} is not divisible by {} heads", self.hidden, self.num_heads),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "need at least two classes"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must be in [0, 1)"));
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 {
            return Err(Error::config("layer_norm_eps", "must be positive"));
        }
        if self.ffn_kind.is_quantum() {
            if self.pqc_layers == 0 {
                return Err(Error::config("pqc_layers", "must be at least 1"));
            }
            if strict_depths && !REFERENCE_DEPTHS.contains(&self.pqc_layers) {
                return Err(Error::config(
                    "pqc_layers",
                    format!("{} is not one of the reference depths {:?}", self.pqc_layers, REFERENCE_DEPTHS),
                ));
            }
        }
        Ok(())
    }

    pub fn pqc_config(&self) -> Option<PqcConfig> {
        match self.ffn_kind {
            FfnKind::Classical => None,
            FfnKind::Qffn => Some(PqcConfig::new(Variant::Optimized, self.pqc_layers)),
            FfnKind::VanillaQffn => Some(PqcConfig::new(Variant::Vanilla, self.pqc_layers)),
        }
    }

    /// Trainable scalars in one feedforward sub-layer.
    pub fn ffn_param_count(&self) -> usize {
        match self.pqc_config() {
            None => classical_ffn_param_count(self.hidden, self.intermediate),
            Some(pqc) => qffn_param_count(self.hidden, &pqc),
        }
    }
}

/// Exact number of trainable scalars of a model built from `config`.
pub fn model_param_count(config: &ModelConfig) -> usize {
    let h = config.hidden;
    let embeddings = config.vocab_size * h + config.max_seq_len * h + 2 * h;
    let attention = 4 * (h * h + h);
    let norms = 2 * 2 * h;
    let per_layer = attention + norms + config.ffn_param_count();
    let classifier = config.num_classes * h + config.num_classes;
    embeddings + config.num_layers * per_layer + classifier
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedForward {
    Classical(ClassicalFfn),
    Quantum(QffnBlock),
}

impl FeedForward {
    fn zeros_like(&self) -> Self {
        match self {
            FeedForward::Classical(f) => FeedForward::Classical(f.zeros_like()),
            FeedForward::Quantum(q) => FeedForward::Quantum(q.zeros_like()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attention: SelfAttention,
    pub attention_norm: LayerNorm,
    pub ffn: FeedForward,
    pub ffn_norm: LayerNorm,
}

impl EncoderLayer {
    fn zeros_like(&self) -> Self {
        Self {
            attention: self.attention.zeros_like(),
            attention_norm: self.attention_norm.zeros_like(),
            ffn: self.ffn.zeros_like(),
            ffn_norm: self.ffn_norm.zeros_like(),
        }
    }
}

impl ParamSet for EncoderLayer {
    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        self.attention.push_tensors(&join(prefix, "attention"), out);
        self.attention_norm.push_tensors(&join(prefix, "attention_norm"), out);
        match &self.ffn {
            FeedForward::Classical(f) => f.push_tensors(&join(prefix, "ffn"), out),
            FeedForward::Quantum(q) => q.push_tensors(&join(prefix, "qffn"), out),
        }
        self.ffn_norm.push_tensors(&join(prefix, "ffn_norm"), out);
    }

    fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.attention.push_tensors_mut(out);
        self.attention_norm.push_tensors_mut(out);
        match &mut self.ffn {
            FeedForward::Classical(f) => f.push_tensors_mut(out),
            FeedForward::Quantum(q) => q.push_tensors_mut(out),
        }
        self.ffn_norm.push_tensors_mut(out);
    }
}

/// The full classifier. Also used as its own gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: ModelConfig,
    /// `[vocab × hidden]`
    pub token_embeddings: Array2<f64>,
    /// `[max_seq_len × hidden]`
    pub position_embeddings: Array2<f64>,
    pub embedding_norm: LayerNorm,
    pub layers: Vec<EncoderLayer>,
    /// `[num_classes × hidden]`
    pub classifier: Linear,
}

/// Activations of one sequence needed for backprop.
struct SampleCache {
    ids: Vec<usize>,
    embedding_norm: LayerNormCache,
    embedding_drop: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    cls: Array1<f64>,
}

struct LayerCache {
    attention: AttentionCache,
    attention_drop: Option<Array2<f64>>,
    attention_norm: LayerNormCache,
    ffn: FfnKindCache,
    ffn_drop: Option<Array2<f64>>,
    ffn_norm: LayerNormCache,
}

enum FfnKindCache {
    Classical(FfnCache),
    Quantum(QffnCache),
    /// Eval mode: the quantum branch ran without Jacobians.
    Skipped,
}

/// Gradients of one sequence. Token-embedding gradients are kept as
/// sparse rows; `body.token_embeddings` is empty.
struct SampleGradients {
    token_rows: Vec<(usize, Array1<f64>)>,
    body: EncoderModel,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of `logits` against `label`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

impl EncoderModel {
    /// Gaussian(0, 0.02) classical tensors, unit/zero layer norms, zero
    /// biases, uniform(−π, π) PQC angles.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate(false)?;
        let h = config.hidden;
        let eps = config.layer_norm_eps;
        let token_embeddings = gaussian((config.vocab_size, h), INIT_STD, rng);
        let position_embeddings = gaussian((config.max_seq_len, h), INIT_STD, rng);
        let mut layers = Vec::with_capacity(config.num_layers);
        for _ in 0..config.num_layers {
            let attention = SelfAttention::new(h, config.num_heads, rng);
            let ffn = match config.ffn_kind {
                FfnKind::Classical => FeedForward::Classical(ClassicalFfn::new(h, config.intermediate, rng)),
                FfnKind::Qffn => FeedForward::Quantum(QffnBlock::optimized(h, config.pqc_layers, rng)?),
                FfnKind::VanillaQffn => FeedForward::Quantum(QffnBlock::vanilla(h, config.pqc_layers, rng)?),
            };
            layers.push(EncoderLayer {
                attention,
                attention_norm: LayerNorm::new(h, eps),
                ffn,
                ffn_norm: LayerNorm::new(h, eps),
            });
        }
        let classifier = Linear::new(h, config.num_classes, rng);
        Ok(Self {
            token_embeddings,
            position_embeddings,
            embedding_norm: LayerNorm::new(h, eps),
            layers,
            classifier,
            config,
        })
    }

    pub fn from_seed(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::new(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            token_embeddings: Array2::zeros(self.token_embeddings.raw_dim()),
            position_embeddings: Array2::zeros(self.position_embeddings.raw_dim()),
            embedding_norm: self.embedding_norm.zeros_like(),
            layers: self.layers.iter().map(EncoderLayer::zeros_like).collect(),
            classifier: self.classifier.zeros_like(),
        }
    }

    fn sample_gradients(&self) -> SampleGradients {
        let mut body = self.zeros_like();
        body.token_embeddings = Array2::zeros((0, self.config.hidden));
        SampleGradients {
            token_rows: Vec::new(),
            body,
        }
    }

    /// Validates one sequence and returns its length with trailing padding
    /// removed.
    fn effective_len(&self, ids: &[u32], mask: &[bool]) -> Result<usize> {
        if ids.len() != mask.len() {
            return Err(Error::shape("attention mask length", ids.len(), mask.len()));
        }
        if ids.is_empty() {
            return Err(Error::shape("token ids", "at least one token", 0));
        }
        if ids.len() > self.config.max_seq_len {
            return Err(Error::shape(
                "sequence length",
                format!("<= {}", self.config.max_seq_len),
                ids.len(),
            ));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::shape(
                "token id",
                format!("< {}", self.config.vocab_size),
                bad,
            ));
        }
        let len = mask
            .iter()
            .rposition(|&m| m)
            .ok_or_else(|| Error::shape("attention mask", "at least one real token", "none"))?;
        Ok(len + 1)
    }

    fn forward_sample(
        &self,
        ids: &[u32],
        mask: &[bool],
        train: bool,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array1<f64>, Option<SampleCache>)> {
        let len = self.effective_len(ids, mask)?;
        let ids: Vec<usize> = ids[..len].iter().map(|&i| i as usize).collect();
        let mask = &mask[..len];
        let p = self.config.dropout;

        let mut maybe_drop = |x: &mut Array2<f64>| -> Option<Array2<f64>> {
            match rng.as_deref_mut() {
                Some(r) if p > 0.0 => Some(dropout(x, p, r)),
                _ => None,
            }
        };

        let mut embedded = self.position_embeddings.slice(s![..len, ..]).to_owned();
        for (mut row, &id) in embedded.rows_mut().into_iter().zip(&ids) {
            row += &self.token_embeddings.row(id);
        }
        let (mut h, embedding_norm) = self.embedding_norm.forward(&embedded);
        let embedding_drop = maybe_drop(&mut h);

        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (mut attended, attention) = layer.attention.forward(&h, mask);
            let attention_drop = maybe_drop(&mut attended);
            let (h1, attention_norm) = layer.attention_norm.forward(&(&h + &attended));
            let (mut transformed, ffn) = match &layer.ffn {
                FeedForward::Classical(f) => {
                    let (y, c) = f.forward(&h1);
                    (y, FfnKindCache::Classical(c))
                }
                FeedForward::Quantum(q) if train => {
                    let (y, c) = q.forward_train(&h1, 0)?;
                    (y, FfnKindCache::Quantum(c))
                }
                FeedForward::Quantum(q) => {
                    (q.forward(&h1, 0)?, FfnKindCache::Skipped)
                }
            };
            let ffn_drop = maybe_drop(&mut transformed);
            let (h2, ffn_norm) = layer.ffn_norm.forward(&(&h1 + &transformed));
            h = h2;
            if train {
                layer_caches.push(LayerCache {
                    attention,
                    attention_drop,
                    attention_norm,
                    ffn,
                    ffn_drop,
                    ffn_norm,
                });
            }
        }
        let cls = h.row(0).to_owned();
        let logits = self.classifier.weight.dot(&cls) + &self.classifier.bias;
        let cache = train.then(|| SampleCache {
            ids,
            embedding_norm,
            embedding_drop,
            layers: layer_caches,
            cls,
        });
        Ok((logits, cache))
    }

    fn backward_sample(&self, cache: &SampleCache, dlogits: &Array1<f64>) -> SampleGradients {
        let mut grads = self.sample_gradients();
        let body = &mut grads.body;
        body.classifier
            .weight
            .scaled_add(1.0, &crate::qffn::outer(dlogits.view(), cache.cls.view()));
        body.classifier.bias += dlogits;
        let len = cache.ids.len();
        let mut dh = Array2::zeros((len, self.config.hidden));
        dh.row_mut(0).assign(&self.classifier.weight.t().dot(dlogits));

        for ((layer, lc), lg) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(body.layers.iter_mut())
            .rev()
        {
            let dr2 = layer.ffn_norm.backward(&lc.ffn_norm, &dh, &mut lg.ffn_norm);
            let mut dtransformed = dr2.clone();
            if let Some(m) = &lc.ffn_drop {
                dtransformed *= m;
            }
            let dffn_in = match (&layer.ffn, &lc.ffn, &mut lg.ffn) {
                (FeedForward::Classical(f), FfnKindCache::Classical(c), FeedForward::Classical(g)) => {
                    f.backward(c, &dtransformed, g)
                }
                (FeedForward::Quantum(q), FfnKindCache::Quantum(c), FeedForward::Quantum(g)) => {
                    q.backward_cached(c, &dtransformed, g)
                }
                _ => unreachable!("cache kind follows layer kind"),
            };
            let dh1 = dr2 + dffn_in;
            let dr1 = layer.attention_norm.backward(&lc.attention_norm, &dh1, &mut lg.attention_norm);
            let mut dattended = dr1.clone();
            if let Some(m) = &lc.attention_drop {
                dattended *= m;
            }
            dh = dr1 + layer.attention.backward(&lc.attention, &dattended, &mut lg.attention);
        }

        if let Some(m) = &cache.embedding_drop {
            dh *= m;
        }
        let dembedded = self
            .embedding_norm
            .backward(&cache.embedding_norm, &dh, &mut body.embedding_norm);
        body.position_embeddings
            .slice_mut(s![..len, ..])
            .scaled_add(1.0, &dembedded);
        grads.token_rows = cache
            .ids
            .iter()
            .zip(dembedded.rows())
            .map(|(&id, row)| (id, row.to_owned()))
            .collect();
        grads
    }

    /// Logits of a single sequence.
    pub fn logits(&self, ids: &[u32], mask: &[bool]) -> Result<Array1<f64>> {
        Ok(self.forward_sample(ids, mask, false, None)?.0)
    }

    /// Batched forward: `[batch × num_classes]` logits.
    pub fn forward(&self, token_ids: &[Vec<u32>], attention_mask: &[Vec<bool>], exec: Exec) -> Result<Array2<f64>> {
        if token_ids.len() != attention_mask.len() {
            return Err(Error::shape("attention mask batch", token_ids.len(), attention_mask.len()));
        }
        let rows = exec.map(token_ids, |i, ids| self.logits(ids, &attention_mask[i]));
        let mut out = Array2::zeros((token_ids.len(), self.config.num_classes));
        for (mut dst, row) in out.rows_mut().into_iter().zip(rows) {
            dst.assign(&row?);
        }
        Ok(out)
    }

    /// Mean cross-entropy over `batch` and its gradient for every trainable
    /// tensor. Per-sample gradients are reduced in batch order.
    /// `dropout_seed` enables dropout (when the configured rate is
    /// positive) with one RNG stream per sample.
    pub fn loss_and_gradients(
        &self,
        batch: &[&EncodedExample],
        dropout_seed: Option<u64>,
        exec: Exec,
    ) -> Result<(f64, EncoderModel)> {
        if batch.is_empty() {
            return Err(Error::shape("batch", "at least one example", 0));
        }
        let scale = 1.0 / batch.len() as f64;
        let per_sample = exec.map(batch, |i, ex| -> Result<(f64, SampleGradients)> {
            if ex.label >= self.config.num_classes {
                return Err(Error::shape("label", format!("< {}", self.config.num_classes), ex.label));
            }
            let mut rng = dropout_seed.map(|seed| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(i as u64);
                r
            });
            let (logits, cache) = self.forward_sample(&ex.ids, &ex.mask, true, rng.as_mut())?;
            let logits = logits.to_vec();
            let loss = cross_entropy(&logits, ex.label);
            let mut dlogits = Array1::from(softmax(&logits));
            dlogits[ex.label] -= 1.0;
            dlogits *= scale;
            let cache = cache.expect("training forward keeps caches");
            Ok((loss, self.backward_sample(&cache, &dlogits)))
        });

        let mut total = self.zeros_like();
        let mut loss = 0.0;
        for result in per_sample {
            let (l, g) = result?;
            loss += l;
            total.accumulate(&g);
        }
        Ok((loss * scale, total))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, batch: &[&EncodedExample], exec: Exec) -> Result<f64> {
        let losses = exec.map(batch, |_, ex| -> Result<f64> {
            let logits = self.logits(&ex.ids, &ex.mask)?;
            Ok(cross_entropy(logits.as_slice().expect("contiguous"), ex.label))
        });
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / batch.len() as f64)
    }

    fn accumulate(&mut self, sample: &SampleGradients) {
        for (id, row) in &sample.token_rows {
            self.token_embeddings.row_mut(*id).scaled_add(1.0, row);
        }
        let mut dst = self.tensors_mut();
        let src = sample.body.tensors();
        for (d, s) in dst.drain(1..).zip(src.into_iter().skip(1)) {
            for (a, b) in d.iter_mut().zip(s.data) {
                *a += b;
            }
        }
    }
}

impl ParamSet for EncoderModel {
    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        out.push(view(prefix, "embeddings.token", &self.token_embeddings));
        out.push(view(prefix, "embeddings.position", &self.position_embeddings));
        self.embedding_norm.push_tensors(&join(prefix, "embeddings.norm"), out);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.push_tensors(&join(prefix, &format!("layers.{i}")), out);
        }
        self.classifier.push_tensors(&join(prefix, "classifier"), out);
    }

    fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(slice_mut(&mut self.token_embeddings));
        out.push(slice_mut(&mut self.position_embeddings));
        self.embedding_norm.push_tensors_mut(out);
        for layer in &mut self.layers {
            layer.push_tensors_mut(out);
        }
        self.classifier.push_tensors_mut(out);
    }
}
