//! Fusing per-trial next-token logits, and the greedy decode loop that
//! feeds each fused token back into every trial.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::numkernel::{argmax, entropy, softmax, Matrix};
use crate::packer::{pack, AttentionMaskSpec, PackedSequence, TokenId};
use crate::sampler::TrialPlan;
use crate::toymodel::Backend;

pub const DEFAULT_ENTROPY_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AggregationStrategy {
    MeanLogits,
    ConfidenceWeighted {
        epsilon: f64,
    },
    /// Trial 1 proposes its top `k`; trial 2 picks among them.
    CrossRefine {
        k: usize,
    },
}

impl AggregationStrategy {
    /// Cross-refinement with `k = 2` for two trials, mean logits otherwise.
    pub fn default_for(trials: usize) -> Self {
        if trials == 2 {
            Self::CrossRefine { k: 2 }
        } else {
            Self::MeanLogits
        }
    }

    pub fn validate(&self, trials: usize, vocab: usize) -> Result<()> {
        match *self {
            Self::MeanLogits => {}
            Self::ConfidenceWeighted { epsilon } => {
                ensure!(epsilon > 0.0, Config, "entropy floor must be positive");
            }
            Self::CrossRefine { k } => {
                ensure!(
                    trials == 2,
                    Config,
                    "cross-refinement needs exactly 2 trials, got {trials}"
                );
                ensure!(
                    (1..=vocab).contains(&k),
                    Config,
                    "top-k {k} outside 1..={vocab}"
                );
            }
        }
        ensure!(trials >= 1, Config, "at least one trial is required");
        Ok(())
    }
}

/// One logit row per trial, all of length `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLogits(Matrix);

impl TrialLogits {
    pub fn new(rows: Matrix) -> Result<Self> {
        ensure!(
            rows.rows() >= 1,
            Contract,
            "need logits from at least one trial"
        );
        ensure!(rows.is_finite(), Contract, "trial logits must be finite");
        Ok(Self(rows))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn trials(&self) -> usize {
        self.0.rows()
    }

    pub fn vocab(&self) -> usize {
        self.0.cols()
    }

    pub fn trial(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub logits: Vec<f64>,
    pub token: TokenId,
}

/// Sum in ascending value order so the result does not depend on the order
/// trials were listed in.
fn order_free_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

pub fn mean_logits(o: &TrialLogits) -> Fused {
    let m = o.trials() as f64;
    let logits: Vec<f64> = (0..o.vocab())
        .map(|t| order_free_sum((0..o.trials()).map(|i| o.trial(i)[t]).collect()) / m)
        .collect();
    let token = argmax(&logits) as TokenId;
    Fused { logits, token }
}

/// Normalized inverse-entropy weights, entropy floored at `epsilon`.
pub fn confidence_weights(o: &TrialLogits, epsilon: f64) -> Vec<f64> {
    let inv: Vec<f64> = (0..o.trials())
        .map(|i| {
            let h = entropy(&softmax(o.trial(i))).expect("softmax output is a distribution");
            1.0 / h.max(epsilon)
        })
        .collect();
    let total = order_free_sum(inv.clone());
    inv.into_iter().map(|w| w / total).collect()
}

pub fn confidence_weighted(o: &TrialLogits, epsilon: f64) -> Fused {
    let w = confidence_weights(o, epsilon);
    let logits: Vec<f64> = (0..o.vocab())
        .map(|t| order_free_sum((0..o.trials()).map(|i| w[i] * o.trial(i)[t]).collect()))
        .collect();
    let token = argmax(&logits) as TokenId;
    Fused { logits, token }
}

/// Indices of the `k` largest entries, larger value first, lower index on
/// ties.
pub fn top_k(o: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..o.len()).collect();
    idx.sort_by(|&a, &b| o[b].total_cmp(&o[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn cross_refine(o1: &[f64], o2: &[f64], k: usize) -> Result<TokenId> {
    ensure!(o1.len() == o2.len(), Shape, "trial logits differ in length");
    ensure!(
        (1..=o1.len()).contains(&k),
        Contract,
        "top-k {k} outside 1..={}",
        o1.len()
    );
    let mut candidates = top_k(o1, k);
    candidates.sort_unstable();
    let mut best = candidates[0];
    for &t in &candidates[1..] {
        if o2[t] > o2[best] {
            best = t;
        }
    }
    Ok(best as TokenId)
}

pub fn aggregate(strategy: AggregationStrategy, o: &TrialLogits) -> Result<TokenId> {
    strategy.validate(o.trials(), o.vocab())?;
    Ok(match strategy {
        AggregationStrategy::MeanLogits => mean_logits(o).token,
        AggregationStrategy::ConfidenceWeighted { epsilon } => {
            confidence_weighted(o, epsilon).token
        }
        AggregationStrategy::CrossRefine { k } => cross_refine(o.trial(0), o.trial(1), k)?,
    })
}

/// Greedy multi-trial decoding.
#[derive(Debug, Clone)]
pub struct DecodeOptions {
    pub steps: usize,
    pub strategy: AggregationStrategy,
    pub stop_token: Option<TokenId>,
    pub mask: AttentionMaskSpec,
}

/// Tokens emitted plus the final packed state.
#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub tokens: Vec<TokenId>,
    pub packed: PackedSequence,
}

pub fn decode(
    backend: &Backend,
    plans: &[TrialPlan],
    video: &Arc<crate::toymodel::VideoTokenStream>,
    text: &[TokenId],
    opts: &DecodeOptions,
) -> Result<DecodeOutput> {
    ensure!(opts.steps >= 1, Contract, "decode needs at least one step");
    opts.strategy.validate(plans.len(), backend.vocab())?;
    let packed = pack(plans, video, text)?;
    decode_packed(backend, packed, opts)
}

/// Decode loop over an already packed state: forward, read each segment's
/// last logits, fuse, append the fused token to every segment.
pub fn decode_packed(
    backend: &Backend,
    mut packed: PackedSequence,
    opts: &DecodeOptions,
) -> Result<DecodeOutput> {
    opts.strategy
        .validate(packed.num_segments(), backend.vocab())?;
    let mut tokens = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let out = backend.segment_logits(&packed, opts.mask)?;
        let token = aggregate(opts.strategy, &TrialLogits::new(out.logits)?)?;
        tokens.push(token);
        if Some(token) == opts.stop_token || step + 1 == opts.steps {
            break;
        }
        packed = packed.append_token(token, backend.max_positions())?;
    }
    Ok(DecodeOutput { tokens, packed })
}
