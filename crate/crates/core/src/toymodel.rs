//! Stand-ins for the multimodal model: a seeded causal transformer decoder,
//! a synthetic frame embedder, and a hand-built needle probe.
//!
//! Both backends read a [`PackedSequence`] under an [`AttentionMaskSpec`]
//! and report how many (query, key) score entries they evaluated.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numkernel::{layer_norm_row, mix64, row_times_matrix, Matrix, Rng};
use crate::packer::{AttentionMaskSpec, PackedSequence, PackedToken, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub vocab: usize,
    pub max_positions: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            model_dim: 64,
            heads: 4,
            vocab: 64,
            max_positions: 8192,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.heads >= 1 && self.model_dim.is_multiple_of(self.heads),
            Shape,
            "model_dim {} is not divisible by {} heads",
            self.model_dim,
            self.heads
        );
        ensure!(
            self.vocab >= 4,
            Config,
            "vocabulary must hold at least 4 tokens"
        );
        ensure!(self.layers >= 1, Config, "at least one layer is required");
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }
}

/// Which frames exist and which carry the needle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub frames: usize,
    pub patches: usize,
    pub needle_frames: Vec<usize>,
}

/// `F x M` patch embeddings of width `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTokenStream {
    frames: usize,
    patches: usize,
    dim: usize,
    data: Vec<f64>,
    needle_frames: BTreeSet<usize>,
}

impl VideoTokenStream {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_tokens(&self) -> usize {
        self.frames * self.patches
    }

    /// Embedding of flat token `frame * M + patch`.
    pub fn token(&self, flat: usize) -> &[f64] {
        &self.data[flat * self.dim..(flat + 1) * self.dim]
    }

    pub fn needle_frames(&self) -> &BTreeSet<usize> {
        &self.needle_frames
    }

    pub fn is_needle_token(&self, flat: usize) -> bool {
        self.needle_frames.contains(&(flat / self.patches))
    }
}

/// Unit vector reserved for needle patches. Fixed for a given width.
pub fn needle_direction(dim: usize) -> Vec<f64> {
    let mut rng = Rng::with_stream(0x6e65_6564_6c65, 0);
    let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Deterministic embeddings: patch `(f, p)` draws `N(0, 1)` entries from
/// `rng.split(f * M + p)`; needle frames instead hold the needle direction
/// scaled to the same expected norm.
pub fn embed_frames(spec: &StreamSpec, dim: usize, rng: &Rng) -> Result<VideoTokenStream> {
    ensure!(
        spec.frames >= 1 && spec.patches >= 1 && dim >= 1,
        Contract,
        "frames, patches and width must be positive"
    );
    ensure!(
        spec.needle_frames.iter().all(|&f| f < spec.frames),
        Contract,
        "needle frame outside the video"
    );
    let needle_frames: BTreeSet<usize> = spec.needle_frames.iter().copied().collect();
    let needle: Vec<f64> = needle_direction(dim)
        .into_iter()
        .map(|x| x * (dim as f64).sqrt())
        .collect();
    let total = spec.frames * spec.patches;
    let mut data = Vec::with_capacity(total * dim);
    for flat in 0..total {
        if needle_frames.contains(&(flat / spec.patches)) {
            data.extend_from_slice(&needle);
        } else {
            let mut r = rng.split(flat as u64);
            data.extend((0..dim).map(|_| r.normal()));
        }
    }
    Ok(VideoTokenStream {
        frames: spec.frames,
        patches: spec.patches,
        dim,
        data,
        needle_frames,
    })
}

/// Number of (query, key) attention score entries evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairCount(pub u64);

impl std::ops::Add for PairCount {
    type Output = PairCount;
    fn add(self, rhs: Self) -> Self {
        PairCount(self.0 + rhs.0)
    }
}

/// Logits at a set of readout positions.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub positions: Vec<usize>,
    /// One row of length `vocab` per readout position.
    pub logits: Matrix,
    pub pairs: PairCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Pre-norm decoder-only transformer with sinusoidal positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub cfg: ModelConfig,
    pub token_embedding: Matrix,
    pub layers: Vec<LayerWeights>,
    pub final_gamma: Vec<f64>,
    pub final_beta: Vec<f64>,
    pub unembed: Matrix,
}

pub const LN_EPS: f64 = 1e-5;

fn scaled_normal(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal() * scale).collect();
    Matrix::from_vec(rows, cols, data).expect("sizes agree")
}

pub fn build_model(cfg: &ModelConfig) -> Result<Transformer> {
    cfg.validate()?;
    let d = cfg.model_dim;
    let scale = 1.0 / (d as f64).sqrt();
    let root = Rng::new(cfg.init_seed);
    let mut rng = root.split(0);
    let token_embedding = scaled_normal(cfg.vocab, d, 1.0, &mut rng);
    let layers = (0..cfg.layers)
        .map(|l| {
            let mut r = root.split(1 + l as u64);
            LayerWeights {
                ln1_gamma: vec![1.0; d],
                ln1_beta: vec![0.0; d],
                wq: scaled_normal(d, d, scale, &mut r),
                wk: scaled_normal(d, d, scale, &mut r),
                wv: scaled_normal(d, d, scale, &mut r),
                wo: scaled_normal(d, d, scale, &mut r),
                ln2_gamma: vec![1.0; d],
                ln2_beta: vec![0.0; d],
                w1: scaled_normal(d, 4 * d, scale, &mut r),
                b1: vec![0.0; 4 * d],
                w2: scaled_normal(4 * d, d, scale, &mut r),
                b2: vec![0.0; d],
            }
        })
        .collect();
    let unembed = scaled_normal(d, cfg.vocab, scale, &mut root.split(u64::MAX));
    Ok(Transformer {
        cfg: cfg.clone(),
        token_embedding,
        layers,
        final_gamma: vec![1.0; d],
        final_beta: vec![0.0; d],
        unembed,
    })
}

/// Sinusoidal encoding of an in-segment position.
pub fn sinusoid(pos: usize, dim: usize, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(dim) {
        let pair = (i / 2) as f64;
        let freq = 1.0 / 10000f64.powf(2.0 * pair / dim as f64);
        let angle = pos as f64 * freq;
        *o = if i % 2 == 0 { angle.sin() } else { angle.cos() };
    }
}

pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Receives every attention row: `(layer, head, query, first key, weights)`.
type AttnObserver<'a> = dyn FnMut(usize, usize, usize, usize, &[f64]) + 'a;

impl Transformer {
    /// Input row for one packed position: token or patch embedding plus the
    /// position encoding.
    pub fn input_row(&self, packed: &PackedSequence, p: usize, out: &mut [f64]) {
        let d = self.cfg.model_dim;
        sinusoid(packed.pos_in_segment()[p], d, out);
        let src = match packed.tokens()[p] {
            PackedToken::Visual(flat) => packed.video().token(flat),
            PackedToken::Text(t) => self.token_embedding.row(t as usize),
        };
        for (o, s) in out.iter_mut().zip(src) {
            *o += s;
        }
    }

    fn check_input(&self, packed: &PackedSequence) -> Result<()> {
        ensure!(
            packed.len() <= self.cfg.max_positions,
            Contract,
            "packed length {} exceeds max_positions {}",
            packed.len(),
            self.cfg.max_positions
        );
        ensure!(
            packed.video().dim() == self.cfg.model_dim,
            Shape,
            "video width {} does not match model_dim {}",
            packed.video().dim(),
            self.cfg.model_dim
        );
        for t in packed.tokens() {
            if let PackedToken::Text(id) = t {
                ensure!(
                    (*id as usize) < self.cfg.vocab,
                    Contract,
                    "token id {id} outside vocabulary of {}",
                    self.cfg.vocab
                );
            }
        }
        Ok(())
    }

    /// Final residual stream for every position.
    #[allow(clippy::needless_range_loop)]
    fn hidden(
        &self,
        packed: &PackedSequence,
        mask: AttentionMaskSpec,
        mut observer: Option<&mut AttnObserver<'_>>,
    ) -> Result<(Matrix, PairCount)> {
        self.check_input(packed)?;
        let n = packed.len();
        let d = self.cfg.model_dim;
        let heads = self.cfg.heads;
        let hd = self.cfg.head_dim();
        let inv_sqrt = 1.0 / (hd as f64).sqrt();

        let mut x = Matrix::zeros(n, d);
        for p in 0..n {
            self.input_row(packed, p, x.row_mut(p));
        }
        let ranges: Vec<_> = (0..n).map(|p| mask.key_range(packed, p)).collect();

        let mut pairs = 0u64;
        let mut h = vec![0.0; d];
        let mut q = Matrix::zeros(n, d);
        let mut k = Matrix::zeros(n, d);
        let mut v = Matrix::zeros(n, d);
        let mut ctx = vec![0.0; d];
        let mut proj = vec![0.0; d];
        let mut hidden = vec![0.0; 4 * d];
        let mut scores = Vec::new();

        for (li, layer) in self.layers.iter().enumerate() {
            for p in 0..n {
                layer_norm_row(x.row(p), &layer.ln1_gamma, &layer.ln1_beta, LN_EPS, &mut h);
                row_times_matrix(&h, &layer.wq, q.row_mut(p));
                row_times_matrix(&h, &layer.wk, k.row_mut(p));
                row_times_matrix(&h, &layer.wv, v.row_mut(p));
            }
            for p in 0..n {
                let keys = ranges[p].clone();
                ctx.fill(0.0);
                for head in 0..heads {
                    let cols = head * hd..(head + 1) * hd;
                    let qp = &q.row(p)[cols.clone()];
                    scores.clear();
                    for key in keys.clone() {
                        let kk = &k.row(key)[cols.clone()];
                        let dot: f64 = qp.iter().zip(kk).map(|(a, b)| a * b).sum();
                        scores.push(dot * inv_sqrt);
                    }
                    pairs += scores.len() as u64;
                    crate::numkernel::softmax_in_place(&mut scores);
                    if let Some(obs) = observer.as_deref_mut() {
                        obs(li, head, p, keys.start, &scores);
                    }
                    let out = &mut ctx[cols.clone()];
                    for (w, key) in scores.iter().zip(keys.clone()) {
                        let vv = &v.row(key)[cols.clone()];
                        for (o, val) in out.iter_mut().zip(vv) {
                            *o += w * val;
                        }
                    }
                }
                row_times_matrix(&ctx, &layer.wo, &mut proj);
                // Residual updates are written after all queries of this
                // layer read K and V, which were computed up front.
                for (xv, pv) in x.row_mut(p).iter_mut().zip(&proj) {
                    *xv += pv;
                }
            }
            for p in 0..n {
                layer_norm_row(x.row(p), &layer.ln2_gamma, &layer.ln2_beta, LN_EPS, &mut h);
                row_times_matrix(&h, &layer.w1, &mut hidden);
                for (hv, b) in hidden.iter_mut().zip(&layer.b1) {
                    *hv = gelu(*hv + b);
                }
                row_times_matrix(&hidden, &layer.w2, &mut proj);
                for ((xv, pv), b) in x.row_mut(p).iter_mut().zip(&proj).zip(&layer.b2) {
                    *xv += pv + b;
                }
            }
        }
        Ok((x, PairCount(pairs)))
    }

    fn readout(&self, x: &Matrix, positions: &[usize]) -> Matrix {
        let d = self.cfg.model_dim;
        let mut h = vec![0.0; d];
        let mut logits = Matrix::zeros(positions.len(), self.cfg.vocab);
        for (r, &p) in positions.iter().enumerate() {
            layer_norm_row(
                x.row(p),
                &self.final_gamma,
                &self.final_beta,
                LN_EPS,
                &mut h,
            );
            row_times_matrix(&h, &self.unembed, logits.row_mut(r));
        }
        logits
    }

    pub fn forward_at(
        &self,
        packed: &PackedSequence,
        mask: AttentionMaskSpec,
        positions: &[usize],
    ) -> Result<ForwardOutput> {
        ensure!(
            positions.iter().all(|&p| p < packed.len()),
            Contract,
            "readout position outside the sequence"
        );
        let (x, pairs) = self.hidden(packed, mask, None)?;
        Ok(ForwardOutput {
            positions: positions.to_vec(),
            logits: self.readout(&x, positions),
            pairs,
        })
    }

    /// Logits at every position.
    pub fn forward(
        &self,
        packed: &PackedSequence,
        mask: AttentionMaskSpec,
    ) -> Result<ForwardOutput> {
        let all: Vec<usize> = (0..packed.len()).collect();
        self.forward_at(packed, mask, &all)
    }

    /// Mean attention each position receives, over every query of its own
    /// segment (queries that cannot see it contribute zero), every layer and
    /// every head.
    pub fn attention_received(
        &self,
        packed: &PackedSequence,
        mask: AttentionMaskSpec,
    ) -> Result<Vec<f64>> {
        let mut received = vec![0.0; packed.len()];
        let mut obs = |_l: usize, _h: usize, _p: usize, start: usize, w: &[f64]| {
            for (i, &wv) in w.iter().enumerate() {
                received[start + i] += wv;
            }
        };
        self.hidden(packed, mask, Some(&mut obs))?;
        let per = (self.cfg.layers * self.cfg.heads) as f64;
        for (p, r) in received.iter_mut().enumerate() {
            let seg_len = packed.segments()[packed.segment_of()[p]].len as f64;
            *r /= per * seg_len;
        }
        Ok(received)
    }

    /// Order in which parameters appear in the flat weight dump.
    pub fn manifest(&self) -> Vec<TensorEntry> {
        let mut out = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            out.push(TensorEntry {
                name,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        };
        let d = self.cfg.model_dim;
        push("token_embedding".into(), self.cfg.vocab, d);
        for l in 0..self.layers.len() {
            for (name, r, c) in [
                ("ln1_gamma", 1, d),
                ("ln1_beta", 1, d),
                ("wq", d, d),
                ("wk", d, d),
                ("wv", d, d),
                ("wo", d, d),
                ("ln2_gamma", 1, d),
                ("ln2_beta", 1, d),
                ("w1", d, 4 * d),
                ("b1", 1, 4 * d),
                ("w2", 4 * d, d),
                ("b2", 1, d),
            ] {
                push(format!("layers.{l}.{name}"), r, c);
            }
        }
        push("final_gamma".into(), 1, d);
        push("final_beta".into(), 1, d);
        push("unembed".into(), d, self.cfg.vocab);
        out
    }

    fn flat_params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.token_embedding.data()];
        for l in &self.layers {
            out.extend([
                l.ln1_gamma.as_slice(),
                &l.ln1_beta,
                l.wq.data(),
                l.wk.data(),
                l.wv.data(),
                l.wo.data(),
                &l.ln2_gamma,
                &l.ln2_beta,
                l.w1.data(),
                &l.b1,
                l.w2.data(),
                &l.b2,
            ]);
        }
        out.extend([
            self.final_gamma.as_slice(),
            &self.final_beta,
            self.unembed.data(),
        ]);
        out
    }

    /// Writes `<stem>.json` (config + manifest) and `<stem>.bin`
    /// (little-endian f64, manifest order).
    pub fn dump_weights(&self, stem: &Path) -> Result<()> {
        let header = WeightHeader {
            config: self.cfg.clone(),
            dtype: "f64-le".into(),
            tensors: self.manifest(),
        };
        std::fs::write(
            stem.with_extension("json"),
            serde_json::to_string_pretty(&header)?,
        )?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("bin"))?);
        for chunk in self.flat_params() {
            for v in chunk {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn load_weights(stem: &Path) -> Result<Transformer> {
        let header: WeightHeader =
            serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        ensure!(
            header.dtype == "f64-le",
            Config,
            "unsupported dtype {}",
            header.dtype
        );
        let mut model = build_model(&header.config)?;
        let expect = model.manifest();
        ensure!(
            header.tensors == expect,
            Config,
            "weight manifest does not match the configured architecture"
        );
        let mut bytes = Vec::new();
        std::fs::File::open(stem.with_extension("bin"))?.read_to_end(&mut bytes)?;
        let total: usize = expect.iter().map(|t| t.rows * t.cols).sum();
        ensure!(
            bytes.len() == total * 8,
            Config,
            "weight file holds {} bytes, expected {}",
            bytes.len(),
            total * 8
        );
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut cursor = values.into_iter();
        let mut take = |n: usize| -> Vec<f64> { cursor.by_ref().take(n).collect() };
        let d = model.cfg.model_dim;
        let vocab = model.cfg.vocab;
        model.token_embedding = Matrix::from_vec(vocab, d, take(vocab * d))?;
        for l in model.layers.iter_mut() {
            l.ln1_gamma = take(d);
            l.ln1_beta = take(d);
            l.wq = Matrix::from_vec(d, d, take(d * d))?;
            l.wk = Matrix::from_vec(d, d, take(d * d))?;
            l.wv = Matrix::from_vec(d, d, take(d * d))?;
            l.wo = Matrix::from_vec(d, d, take(d * d))?;
            l.ln2_gamma = take(d);
            l.ln2_beta = take(d);
            l.w1 = Matrix::from_vec(d, 4 * d, take(4 * d * d))?;
            l.b1 = take(4 * d);
            l.w2 = Matrix::from_vec(4 * d, d, take(4 * d * d))?;
            l.b2 = take(d);
        }
        model.final_gamma = take(d);
        model.final_beta = take(d);
        model.unembed = Matrix::from_vec(d, vocab, take(d * vocab))?;
        Ok(model)
    }

    /// Order-sensitive checksum of the first layer's weights.
    pub fn first_layer_checksum(&self) -> u64 {
        let l = &self.layers[0];
        [&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2]
            .iter()
            .flat_map(|m| m.data())
            .fold(0u64, |acc, v| mix64(acc ^ v.to_bits()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightHeader {
    config: ModelConfig,
    dtype: String,
    tensors: Vec<TensorEntry>,
}

/// Controllable backend whose answer logit counts visible needle tokens.
///
/// At readout position `p` it scans the keys the mask exposes to `p`.
/// `logit[answer] = gain * needles + noise`, other entries are pure noise,
/// with noise uniform in `[-noise, noise]`. The noise stream is keyed by
/// `seed` and a hash of the visible tokens, so it depends on content alone
/// and not on where a segment sits in the packing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeedleProbe {
    pub answer: TokenId,
    pub gain: f64,
    pub noise: f64,
    pub seed: u64,
    pub vocab: usize,
}

impl NeedleProbe {
    pub fn new(answer: TokenId, gain: f64, noise: f64, seed: u64, vocab: usize) -> Result<Self> {
        ensure!(gain > 0.0, Config, "probe gain must be positive");
        ensure!(
            noise >= 0.0 && noise < gain,
            Config,
            "probe noise {noise} must lie in [0, gain={gain})"
        );
        ensure!(vocab >= 4, Config, "vocabulary must hold at least 4 tokens");
        ensure!(
            (answer as usize) < vocab,
            Config,
            "answer token {answer} outside vocabulary"
        );
        Ok(Self {
            answer,
            gain,
            noise,
            seed,
            vocab,
        })
    }

    pub fn forward_at(
        &self,
        packed: &PackedSequence,
        mask: AttentionMaskSpec,
        positions: &[usize],
    ) -> Result<ForwardOutput> {
        ensure!(
            positions.iter().all(|&p| p < packed.len()),
            Contract,
            "readout position outside the sequence"
        );
        let video = packed.video();
        let mut logits = Matrix::zeros(positions.len(), self.vocab);
        let mut pairs = 0u64;
        for (r, &p) in positions.iter().enumerate() {
            let keys = mask.key_range(packed, p);
            pairs += keys.len() as u64;
            let mut needles = 0usize;
            let mut h = mix64(self.seed);
            for key in keys {
                let code = match packed.tokens()[key] {
                    PackedToken::Visual(flat) => {
                        needles += usize::from(video.is_needle_token(flat));
                        (flat as u64) << 1
                    }
                    PackedToken::Text(t) => (u64::from(t) << 1) | 1,
                };
                h = mix64(h ^ code);
            }
            let row = logits.row_mut(r);
            if self.noise > 0.0 {
                let mut rng = Rng::with_stream(self.seed, h);
                for v in row.iter_mut() {
                    *v = rng.symmetric(self.noise);
                }
            }
            row[self.answer as usize] += self.gain * needles as f64;
        }
        Ok(ForwardOutput {
            positions: positions.to_vec(),
            logits,
            pairs: PairCount(pairs),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    SeededTransformer(Box<Transformer>),
    NeedleProbe(NeedleProbe),
}

impl Backend {
    pub fn vocab(&self) -> usize {
        match self {
            Backend::SeededTransformer(t) => t.cfg.vocab,
            Backend::NeedleProbe(p) => p.vocab,
        }
    }

    pub fn max_positions(&self) -> usize {
        match self {
            Backend::SeededTransformer(t) => t.cfg.max_positions,
            Backend::NeedleProbe(_) => usize::MAX,
        }
    }

    /// Logits at the given positions.
    pub fn forward_at(
        &self,
        packed: &PackedSequence,
        mask: AttentionMaskSpec,
        positions: &[usize],
    ) -> Result<ForwardOutput> {
        match self {
            Backend::SeededTransformer(t) => t.forward_at(packed, mask, positions),
            Backend::NeedleProbe(p) => p.forward_at(packed, mask, positions),
        }
    }

    /// Logits at every position.
    pub fn forward(
        &self,
        packed: &PackedSequence,
        mask: AttentionMaskSpec,
    ) -> Result<ForwardOutput> {
        let all: Vec<usize> = (0..packed.len()).collect();
        self.forward_at(packed, mask, &all)
    }

    /// Logits at each segment's final position, in trial order.
    pub fn segment_logits(
        &self,
        packed: &PackedSequence,
        mask: AttentionMaskSpec,
    ) -> Result<ForwardOutput> {
        self.forward_at(packed, mask, &packed.last_positions())
    }

    pub fn attention_received_scores(
        &self,
        packed: &PackedSequence,
        mask: AttentionMaskSpec,
    ) -> Result<Vec<f64>> {
        match self {
            Backend::SeededTransformer(t) => t.attention_received(packed, mask),
            Backend::NeedleProbe(_) => Err(Error::Unsupported(
                "the needle probe has no attention weights".into(),
            )),
        }
    }
}
