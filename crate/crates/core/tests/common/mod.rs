//! Shared helpers: an independent dense-matrix reference forward pass and
//! random packing generators.
#![allow(dead_code)]

use std::sync::Arc;

use t3s_core::numkernel::{sample_without_replacement, Matrix, Rng};
use t3s_core::packer::{pack, PackedSequence, PackedToken, TokenId};
use t3s_core::sampler::TrialPlan;
use t3s_core::toymodel::{embed_frames, ModelConfig, StreamSpec, Transformer, VideoTokenStream};

pub struct DenseOut {
    /// Logits at every position.
    pub logits: Vec<Vec<f64>>,
    /// Attention each key receives, averaged over layers, heads and the
    /// queries of its segment.
    pub received: Vec<f64>,
}

type Dense = Vec<Vec<f64>>;

fn to_dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn mm(a: &Dense, b: &Dense) -> Dense {
    let (n, k, c) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; c]; n];
    for i in 0..n {
        for j in 0..c {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn ln(x: &Dense, g: &[f64], b: &[f64]) -> Dense {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + 1e-5).sqrt();
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) * inv * g[i] + b[i])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn position_code(pos: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Whole-sequence forward with an explicit `n x n` mask built from segment
/// boundaries, full score matrices and masked softmax.
pub fn dense_forward(model: &Transformer, packed: &PackedSequence) -> DenseOut {
    let cfg = &model.cfg;
    let (d, heads) = (cfg.model_dim, cfg.heads);
    let hd = d / heads;
    let n = packed.len();

    let mut seg_of = vec![0; n];
    let mut start_of = vec![0; n];
    let mut seg_len = vec![0; n];
    for (i, s) in packed.segments().iter().enumerate() {
        for p in s.start..s.start + s.len {
            seg_of[p] = i;
            start_of[p] = s.start;
            seg_len[p] = s.len;
        }
    }
    let allowed = |p: usize, q: usize| seg_of[p] == seg_of[q] && q <= p;

    let mut x: Dense = (0..n)
        .map(|p| {
            let emb = match packed.tokens()[p] {
                PackedToken::Visual(flat) => packed.video().token(flat).to_vec(),
                PackedToken::Text(t) => model.token_embedding.row(t as usize).to_vec(),
            };
            let pe = position_code(p - start_of[p], d);
            emb.iter().zip(&pe).map(|(a, b)| a + b).collect()
        })
        .collect();

    let mut received = vec![0.0; n];
    for layer in &model.layers {
        let h = ln(&x, &layer.ln1_gamma, &layer.ln1_beta);
        let q = mm(&h, &to_dense(&layer.wq));
        let k = mm(&h, &to_dense(&layer.wk));
        let v = mm(&h, &to_dense(&layer.wv));
        let mut ctx = vec![vec![0.0; d]; n];
        for head in 0..heads {
            let cols = head * hd..(head + 1) * hd;
            let mut scores = vec![vec![f64::NEG_INFINITY; n]; n];
            for p in 0..n {
                for key in 0..n {
                    if allowed(p, key) {
                        let dot: f64 = cols.clone().map(|c| q[p][c] * k[key][c]).sum();
                        scores[p][key] = dot / (hd as f64).sqrt();
                    }
                }
            }
            for p in 0..n {
                let max = scores[p].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores[p].iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for key in 0..n {
                    let w = exps[key] / z;
                    received[key] += w;
                    for c in cols.clone() {
                        ctx[p][c] += w * v[key][c];
                    }
                }
            }
        }
        let attn = mm(&ctx, &to_dense(&layer.wo));
        for p in 0..n {
            for c in 0..d {
                x[p][c] += attn[p][c];
            }
        }
        let h = ln(&x, &layer.ln2_gamma, &layer.ln2_beta);
        let mut hid = mm(&h, &to_dense(&layer.w1));
        for row in hid.iter_mut() {
            for (c, val) in row.iter_mut().enumerate() {
                *val = gelu(*val + layer.b1[c]);
            }
        }
        let ff = mm(&hid, &to_dense(&layer.w2));
        for p in 0..n {
            for c in 0..d {
                x[p][c] += ff[p][c] + layer.b2[c];
            }
        }
    }
    let per = (cfg.layers * heads) as f64;
    for p in 0..n {
        received[p] /= per * seg_len[p] as f64;
    }
    let logits = mm(
        &ln(&x, &model.final_gamma, &model.final_beta),
        &to_dense(&model.unembed),
    );
    DenseOut { logits, received }
}

pub fn small_model_config(rng: &mut Rng) -> ModelConfig {
    let heads = [1, 2, 4][rng.below(3)];
    ModelConfig {
        layers: 1 + rng.below(2),
        model_dim: heads * (2 + rng.below(3)) * 2,
        heads,
        vocab: 8 + rng.below(9),
        max_positions: 4096,
        init_seed: rng.next_u64(),
    }
}

/// A video with `F = 16`, `M = 8` and one needle frame per four.
pub fn random_video(dim: usize, rng: &mut Rng) -> Arc<VideoTokenStream> {
    let spec = StreamSpec {
        frames: 16,
        patches: 8,
        needle_frames: vec![0, 4, 8, 12],
    };
    Arc::new(embed_frames(&spec, dim, &rng.split(0xE)).unwrap())
}

/// `m` trials of 8 frames whose segments (visual plus two text tokens) have
/// random lengths in `4..=64`.
pub fn random_plans(video: &VideoTokenStream, m: usize, rng: &mut Rng) -> Vec<TrialPlan> {
    let per_trial = 8;
    let pool = per_trial * video.patches();
    (0..m)
        .map(|_| {
            let seg_len = 4 + rng.below(61);
            let visual = seg_len - 2;
            let frame_indices = sample_without_replacement(video.frames(), per_trial, rng).unwrap();
            let token_keep = sample_without_replacement(pool, visual, rng).unwrap();
            TrialPlan {
                frame_indices,
                token_keep,
                alpha: visual as f64 / pool as f64,
            }
        })
        .collect()
}

pub const TEXT: [TokenId; 2] = [1, 3];

pub fn random_packing(dim: usize, m: usize, rng: &mut Rng) -> PackedSequence {
    let video = random_video(dim, rng);
    let plans = random_plans(&video, m, rng);
    pack(&plans, &video, &TEXT).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
