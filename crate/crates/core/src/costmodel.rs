//! Attention cost accounting: the quadratic model, exact pair counts, and
//! wall-clock first-token latency.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::aggregator::{aggregate, AggregationStrategy, TrialLogits};
use crate::error::{ensure, Result};
use crate::numkernel::Matrix;
use crate::packer::{AttentionMaskSpec, PackedSequence};
use crate::toymodel::{Backend, PairCount};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalCosts {
    pub base: f64,
    pub multi: f64,
    pub sum_sq: f64,
    pub speedup: f64,
}

/// `L^2` against `L^2 * sum(alpha_i^2)`.
pub fn theoretical_costs(len: usize, alphas: &[f64]) -> Result<TheoreticalCosts> {
    ensure!(len >= 1, Contract, "sequence length must be positive");
    ensure!(!alphas.is_empty(), Contract, "need at least one ratio");
    ensure!(
        alphas.iter().all(|&a| a > 0.0 && a <= 1.0),
        Contract,
        "ratios must lie in (0, 1]"
    );
    let l2 = (len as f64) * (len as f64);
    let sum_sq: f64 = alphas.iter().map(|a| a * a).sum();
    Ok(TheoreticalCosts {
        base: l2,
        multi: l2 * sum_sq,
        sum_sq,
        speedup: 1.0 / sum_sq,
    })
}

/// Entries of one causal score triangle of side `len`.
pub fn causal_pairs(len: usize) -> u64 {
    let l = len as u64;
    l * (l + 1) / 2
}

/// Score entries a full forward evaluates under `mask`, summed over
/// `layers * heads`.
pub fn count_pairs(
    packed: &PackedSequence,
    mask: AttentionMaskSpec,
    layers: usize,
    heads: usize,
) -> PairCount {
    let per: u64 = (0..packed.len())
        .map(|p| mask.key_range(packed, p).len() as u64)
        .sum();
    PairCount(per * (layers * heads) as u64)
}

/// Cost comparison between one full sequence and its packed multi-trial
/// counterpart. Latencies are only present for timed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    #[serde(rename = "L")]
    pub len: usize,
    pub alpha: Vec<f64>,
    pub theoretical_base: f64,
    pub theoretical_multi: f64,
    pub theoretical_speedup: f64,
    pub measured_pairs_base: u64,
    pub measured_pairs_multi: u64,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub measured_speedup: Option<f64>,
    pub fallback_serial: bool,
}

impl CostReport {
    /// Report without timings, pair counts taken from the mask layout.
    pub fn untimed(
        baseline: &PackedSequence,
        t3s: &PackedSequence,
        alphas: &[f64],
        layers: usize,
        heads: usize,
    ) -> Result<Self> {
        let len = baseline.segments()[0].visual_len;
        let th = theoretical_costs(len.max(1), alphas)?;
        let mask = AttentionMaskSpec::BlockDiagonalCausal;
        Ok(Self {
            len,
            alpha: alphas.to_vec(),
            theoretical_base: th.base,
            theoretical_multi: th.multi,
            theoretical_speedup: th.speedup,
            measured_pairs_base: count_pairs(baseline, mask, layers, heads).0,
            measured_pairs_multi: count_pairs(t3s, mask, layers, heads).0,
            tau1: None,
            tau2: None,
            measured_speedup: None,
            fallback_serial: false,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MeasureOptions {
    /// Timed repetitions per side; the median is reported.
    pub repeats: usize,
    pub strategy: AggregationStrategy,
    /// When the packed forward's dense score matrix (`len^2` f64 entries)
    /// would exceed this many bytes, trials run one after another instead.
    pub memory_budget_bytes: Option<u64>,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            repeats: 5,
            strategy: AggregationStrategy::MeanLogits,
            memory_budget_bytes: None,
        }
    }
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Forward + aggregation to the first fused token. Returns elapsed time and
/// pairs evaluated.
fn first_token(
    backend: &Backend,
    packed: &PackedSequence,
    strategy: AggregationStrategy,
    serial: bool,
) -> Result<(Duration, PairCount)> {
    let mask = AttentionMaskSpec::BlockDiagonalCausal;
    let start = Instant::now();
    let (logits, pairs) = if serial {
        let mut rows = Vec::with_capacity(packed.num_segments());
        let mut pairs = PairCount::default();
        for i in 0..packed.num_segments() {
            let alone = packed.segment_alone(i);
            let out = backend.segment_logits(&alone, mask)?;
            rows.push(out.logits.row(0).to_vec());
            pairs = pairs + out.pairs;
        }
        (Matrix::from_rows(&rows)?, pairs)
    } else {
        let out = backend.segment_logits(packed, mask)?;
        (out.logits, out.pairs)
    };
    let token = aggregate(strategy, &TrialLogits::new(logits)?)?;
    let elapsed = start.elapsed();
    std::hint::black_box(token);
    Ok((elapsed, pairs))
}

/// Median first-token latency of `baseline` (one sequence) against `t3s`
/// (packed trials). Embedding and sampling happen before the clock starts.
pub fn measure(
    backend: &Backend,
    baseline: &PackedSequence,
    t3s: &PackedSequence,
    alphas: &[f64],
    opts: &MeasureOptions,
) -> Result<CostReport> {
    ensure!(
        opts.repeats >= 3,
        Contract,
        "timing needs at least 3 repeats"
    );
    ensure!(
        baseline.num_segments() == 1,
        Contract,
        "the baseline must be a single sequence"
    );
    let len = baseline.segments()[0].visual_len;
    let th = theoretical_costs(len.max(1), alphas)?;
    let dense_bytes = (t3s.len() as u64).pow(2) * 8;
    let serial = opts.memory_budget_bytes.is_some_and(|b| dense_bytes > b);
    let base_strategy = AggregationStrategy::MeanLogits;

    // Warm-up, also the source of the pair counts.
    let (_, pairs_base) = first_token(backend, baseline, base_strategy, false)?;
    let (_, pairs_multi) = first_token(backend, t3s, opts.strategy, serial)?;

    let mut t1 = Vec::with_capacity(opts.repeats);
    let mut t2 = Vec::with_capacity(opts.repeats);
    for _ in 0..opts.repeats {
        t1.push(
            first_token(backend, baseline, base_strategy, false)?
                .0
                .as_secs_f64(),
        );
        t2.push(
            first_token(backend, t3s, opts.strategy, serial)?
                .0
                .as_secs_f64(),
        );
    }
    let tau1 = median(t1);
    let tau2 = median(t2);
    Ok(CostReport {
        len,
        alpha: alphas.to_vec(),
        theoretical_base: th.base,
        theoretical_multi: th.multi,
        theoretical_speedup: th.speedup,
        measured_pairs_base: pairs_base.0,
        measured_pairs_multi: pairs_multi.0,
        tau1: Some(tau1),
        tau2: Some(tau2),
        measured_speedup: Some(tau1 / tau2),
        fallback_serial: serial,
    })
}
