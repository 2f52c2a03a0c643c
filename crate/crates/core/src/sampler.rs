//! Per-trial frame and token selection.
//!
//! A trial first picks `N` of the `F` frames (kept in temporal order), then
//! keeps `floor(alpha * N * M)` of the resulting `N * M` visual tokens.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::numkernel::{sample_without_replacement, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameMethod {
    Random,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenStrategy {
    /// Uniform random subset of token positions.
    RandTok,
    /// Deterministic stride over token positions.
    UniTok,
    /// Whole frames kept or dropped together.
    RandFrm,
    /// Highest caller-supplied attention scores.
    AttnTop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub total_frames: usize,
    pub frames_per_trial: usize,
    pub patches_per_frame: usize,
    pub trials: usize,
    pub ratios: Vec<f64>,
    pub frame_method: FrameMethod,
    pub token_strategy: TokenStrategy,
    /// Every trial reuses the first trial's frames ("m1").
    pub reuse_frames: bool,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.trials >= 1, Config, "at least one trial is required");
        ensure!(
            self.frames_per_trial <= self.total_frames,
            Config,
            "frames_per_trial {} exceeds total_frames {}",
            self.frames_per_trial,
            self.total_frames
        );
        ensure!(
            self.frames_per_trial >= 1 && self.patches_per_frame >= 1,
            Config,
            "frames_per_trial and patches_per_frame must be positive"
        );
        ensure!(
            self.ratios.len() == self.trials,
            Config,
            "{} ratios given for {} trials",
            self.ratios.len(),
            self.trials
        );
        for &a in &self.ratios {
            ensure!(a > 0.0 && a <= 1.0, Config, "ratio {a} outside (0, 1]");
        }
        Ok(())
    }

    /// Visual tokens per trial before subsampling.
    pub fn tokens_per_trial(&self) -> usize {
        self.frames_per_trial * self.patches_per_frame
    }
}

/// One trial's selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    /// Ascending frame indices into the source video.
    pub frame_indices: Vec<usize>,
    /// Ascending indices into the trial's `N * M` gathered tokens.
    pub token_keep: Vec<usize>,
    pub alpha: f64,
}

/// `floor(alpha * len)`, the retained-token count.
pub fn retained_len(len: usize, alpha: f64) -> usize {
    (alpha * len as f64).floor() as usize
}

pub fn sample_frame_indices(
    total_frames: usize,
    take: usize,
    method: FrameMethod,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    ensure!(
        take <= total_frames,
        Contract,
        "cannot sample {take} frames from {total_frames}"
    );
    match method {
        FrameMethod::Random => sample_without_replacement(total_frames, take, rng),
        FrameMethod::Uniform => Ok(stride_indices(total_frames, take)),
    }
}

/// `floor(j * len / count)` for `j in 0..count`; distinct whenever
/// `count <= len`.
fn stride_indices(len: usize, count: usize) -> Vec<usize> {
    (0..count).map(|j| j * len / count).collect()
}

pub fn subsample_tokens(
    len: usize,
    patches_per_frame: usize,
    alpha: f64,
    strategy: TokenStrategy,
    rng: &mut Rng,
    attn_scores: Option<&[f64]>,
) -> Result<Vec<usize>> {
    ensure!(
        alpha > 0.0 && alpha <= 1.0,
        Contract,
        "retention ratio {alpha} outside (0, 1]"
    );
    let keep = retained_len(len, alpha);
    match strategy {
        TokenStrategy::RandTok => sample_without_replacement(len, keep, rng),
        TokenStrategy::UniTok => Ok(if keep == 0 {
            Vec::new()
        } else {
            stride_indices(len, keep)
        }),
        TokenStrategy::RandFrm => {
            ensure!(
                patches_per_frame >= 1 && len.is_multiple_of(patches_per_frame),
                Contract,
                "token count {len} is not a whole number of {patches_per_frame}-token frames"
            );
            let frames = len / patches_per_frame;
            // Enough whole frames to cover `keep`; the last block is cut
            // short when `keep` is not frame-aligned.
            let need = keep.div_ceil(patches_per_frame);
            let chosen = sample_without_replacement(frames, need, rng)?;
            let mut out: Vec<usize> = chosen
                .iter()
                .flat_map(|&f| f * patches_per_frame..(f + 1) * patches_per_frame)
                .collect();
            out.truncate(keep);
            Ok(out)
        }
        TokenStrategy::AttnTop => {
            let scores = attn_scores.ok_or_else(|| {
                crate::Error::Contract("attention-ranked selection needs scores".into())
            })?;
            ensure!(
                scores.len() == len,
                Contract,
                "{} scores for {len} tokens",
                scores.len()
            );
            let mut order: Vec<usize> = (0..len).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            order.truncate(keep);
            order.sort_unstable();
            Ok(order)
        }
    }
}

/// Supplies per-token attention scores for a trial's frames; used only by
/// [`TokenStrategy::AttnTop`].
pub type ScoreFn<'a> = dyn Fn(&[usize]) -> Result<Vec<f64>> + Sync + 'a;

/// Builds all `m` plans. Trial `i` draws frames from `rng.split(i).split(0)`
/// and tokens from `rng.split(i).split(1)`, so plans are independent of
/// construction order.
pub fn build_trial_plans(
    cfg: &SamplerConfig,
    rng: &Rng,
    scorer: Option<&ScoreFn<'_>>,
) -> Result<Vec<TrialPlan>> {
    cfg.validate()?;
    if cfg.token_strategy == TokenStrategy::AttnTop {
        ensure!(
            scorer.is_some(),
            Contract,
            "attention-ranked selection needs a score source"
        );
    }
    let len = cfg.tokens_per_trial();
    let mut plans = Vec::with_capacity(cfg.trials);
    for (i, &alpha) in cfg.ratios.iter().enumerate() {
        let trial_rng = rng.split(i as u64);
        let frame_indices = if cfg.reuse_frames && i > 0 {
            plans
                .first()
                .map(|p: &TrialPlan| p.frame_indices.clone())
                .unwrap_or_default()
        } else {
            sample_frame_indices(
                cfg.total_frames,
                cfg.frames_per_trial,
                cfg.frame_method,
                &mut trial_rng.split(0),
            )?
        };
        let scores = match (cfg.token_strategy, scorer) {
            (TokenStrategy::AttnTop, Some(f)) => Some(f(&frame_indices)?),
            _ => None,
        };
        let token_keep = subsample_tokens(
            len,
            cfg.patches_per_frame,
            alpha,
            cfg.token_strategy,
            &mut trial_rng.split(1),
            scores.as_deref(),
        )?;
        plans.push(TrialPlan {
            frame_indices,
            token_keep,
            alpha,
        });
    }
    Ok(plans)
}

/// Probability that at least one of `m` independent trials of `N` frames
/// drawn without replacement from `F` contains a fixed frame.
pub fn closed_form_coverage(total_frames: usize, frames_per_trial: usize, trials: usize) -> f64 {
    let miss = 1.0 - frames_per_trial as f64 / total_frames as f64;
    1.0 - miss.powi(trials as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(strategy: TokenStrategy) -> SamplerConfig {
        SamplerConfig {
            total_frames: 20,
            frames_per_trial: 4,
            patches_per_frame: 3,
            trials: 2,
            ratios: vec![0.5, 0.5],
            frame_method: FrameMethod::Random,
            token_strategy: strategy,
            reuse_frames: false,
        }
    }

    #[test]
    fn uniform_frames_use_stride() {
        let mut rng = Rng::new(0);
        assert_eq!(
            sample_frame_indices(10, 5, FrameMethod::Uniform, &mut rng).unwrap(),
            vec![0, 2, 4, 6, 8]
        );
        let mut other = Rng::new(77);
        assert_eq!(
            sample_frame_indices(37, 9, FrameMethod::Uniform, &mut rng).unwrap(),
            sample_frame_indices(37, 9, FrameMethod::Uniform, &mut other).unwrap()
        );
    }

    #[test]
    fn random_full_sample_and_errors() {
        let mut rng = Rng::new(1);
        assert_eq!(
            sample_frame_indices(6, 6, FrameMethod::Random, &mut rng).unwrap(),
            (0..6).collect::<Vec<_>>()
        );
        assert!(sample_frame_indices(3, 4, FrameMethod::Random, &mut rng).is_err());
    }

    #[test]
    fn frame_inclusion_frequency() {
        let draws = 50_000;
        let mut rng = Rng::new(8);
        let hits = (0..draws)
            .filter(|_| {
                sample_frame_indices(100, 25, FrameMethod::Random, &mut rng)
                    .unwrap()
                    .contains(&7)
            })
            .count();
        let p = 0.25;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - draws as f64 * p).abs() < 3.0 * sigma);
    }

    #[test]
    fn token_counts_follow_floor() {
        let mut rng = Rng::new(2);
        for s in [TokenStrategy::RandTok, TokenStrategy::UniTok] {
            assert_eq!(
                subsample_tokens(7, 7, 0.5, s, &mut rng, None)
                    .unwrap()
                    .len(),
                3
            );
            assert_eq!(
                subsample_tokens(9, 3, 1.0, s, &mut rng, None).unwrap(),
                (0..9).collect::<Vec<_>>()
            );
        }
        assert!(subsample_tokens(9, 3, 0.0, TokenStrategy::RandTok, &mut rng, None).is_err());
        assert!(subsample_tokens(9, 3, 1.5, TokenStrategy::RandTok, &mut rng, None).is_err());
        assert!(subsample_tokens(9, 3, 0.5, TokenStrategy::AttnTop, &mut rng, None).is_err());
    }

    #[test]
    fn whole_frame_blocks() {
        let mut rng = Rng::new(3);
        for _ in 0..200 {
            let keep =
                subsample_tokens(12, 3, 0.5, TokenStrategy::RandFrm, &mut rng, None).unwrap();
            assert_eq!(keep.len(), 6);
            for block in keep.chunks(3) {
                assert_eq!(block[0] % 3, 0);
                assert_eq!(block, &[block[0], block[0] + 1, block[0] + 2]);
            }
        }
    }

    #[test]
    fn frame_blocks_truncate_last() {
        // N=4, M=3, alpha=0.6 keeps floor(7.2)=7: two full blocks plus one token.
        let mut rng = Rng::new(4);
        let keep = subsample_tokens(12, 3, 0.6, TokenStrategy::RandFrm, &mut rng, None).unwrap();
        assert_eq!(keep.len(), 7);
        assert_eq!(keep[6] % 3, 0);
    }

    #[test]
    fn attn_top_breaks_ties_low() {
        let mut rng = Rng::new(0);
        let scores = [0.1, 0.5, 0.5, 0.9, 0.5, 0.0];
        let keep =
            subsample_tokens(6, 2, 0.5, TokenStrategy::AttnTop, &mut rng, Some(&scores)).unwrap();
        assert_eq!(keep, vec![1, 2, 3]);
    }

    #[test]
    fn single_trial_full_retention() {
        let c = SamplerConfig {
            trials: 1,
            ratios: vec![1.0],
            ..cfg(TokenStrategy::RandTok)
        };
        let rng = Rng::new(12);
        let plans = build_trial_plans(&c, &rng, None).unwrap();
        assert_eq!(plans.len(), 1);
        let frames =
            sample_frame_indices(20, 4, FrameMethod::Random, &mut rng.split(0).split(0)).unwrap();
        assert_eq!(plans[0].frame_indices, frames);
        assert_eq!(plans[0].token_keep, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn reuse_shares_frames_not_tokens() {
        let c = SamplerConfig {
            reuse_frames: true,
            ..cfg(TokenStrategy::RandTok)
        };
        let mut distinct = 0;
        for seed in 0..200 {
            let plans = build_trial_plans(&c, &Rng::new(seed), None).unwrap();
            assert_eq!(plans[0].frame_indices, plans[1].frame_indices);
            distinct += usize::from(plans[0].token_keep != plans[1].token_keep);
        }
        // C(12,6) = 924 keep sets, so collisions are rare.
        assert!(distinct >= 190, "{distinct}");
    }

    #[test]
    fn reported_ratios_at_n256() {
        let c = SamplerConfig {
            total_frames: 512,
            frames_per_trial: 256,
            patches_per_frame: 4,
            trials: 2,
            ratios: vec![0.5, 0.3],
            frame_method: FrameMethod::Random,
            token_strategy: TokenStrategy::RandTok,
            reuse_frames: false,
        };
        let plans = build_trial_plans(&c, &Rng::new(0), None).unwrap();
        assert_eq!(plans[0].token_keep.len(), 512);
        assert_eq!(plans[1].token_keep.len(), 307);
    }

    #[test]
    fn attn_top_requires_scorer() {
        assert!(build_trial_plans(&cfg(TokenStrategy::AttnTop), &Rng::new(0), None).is_err());
        let scorer = |frames: &[usize]| -> Result<Vec<f64>> {
            Ok((0..frames.len() * 3).map(|i| (i % 5) as f64).collect())
        };
        let plans =
            build_trial_plans(&cfg(TokenStrategy::AttnTop), &Rng::new(0), Some(&scorer)).unwrap();
        assert_eq!(plans[0].token_keep.len(), 6);
    }

    #[test]
    fn coverage_closed_form() {
        assert_eq!(closed_form_coverage(10, 10, 3), 1.0);
        assert!((closed_form_coverage(100, 25, 2) - 0.4375).abs() < 1e-15);
        assert_eq!(closed_form_coverage(100, 25, 1), 0.25);
    }

    #[test]
    fn coverage_monte_carlo() {
        let c = SamplerConfig {
            total_frames: 100,
            frames_per_trial: 25,
            patches_per_frame: 1,
            trials: 2,
            ratios: vec![1.0, 1.0],
            frame_method: FrameMethod::Random,
            token_strategy: TokenStrategy::UniTok,
            reuse_frames: false,
        };
        let draws = 100_000;
        let root = Rng::new(31);
        let hits = (0..draws)
            .filter(|&d| {
                build_trial_plans(&c, &root.split(d), None)
                    .unwrap()
                    .iter()
                    .any(|p| p.frame_indices.contains(&0))
            })
            .count();
        let p = 0.4375;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - draws as f64 * p).abs() < 3.0 * sigma);
    }

    mod props {
        use super::*;
        use crate::numkernel::Rng;
        use proptest::prelude::*;

        fn strategy() -> impl Strategy<Value = TokenStrategy> {
            prop_oneof![
                Just(TokenStrategy::RandTok),
                Just(TokenStrategy::UniTok),
                Just(TokenStrategy::RandFrm),
                Just(TokenStrategy::AttnTop),
            ]
        }

        proptest! {
            #[test]
            fn plan_invariants(
                seed in any::<u64>(),
                f in 1usize..=64,
                n_frac in 0.01f64..=1.0,
                m_patch in 1usize..=8,
                trials in 1usize..=4,
                alphas in prop::collection::vec(0.01f64..=1.0, 4),
                uniform in any::<bool>(),
                reuse in any::<bool>(),
                strat in strategy(),
            ) {
                let n = ((f as f64 * n_frac).ceil() as usize).clamp(1, f);
                let c = SamplerConfig {
                    total_frames: f,
                    frames_per_trial: n,
                    patches_per_frame: m_patch,
                    trials,
                    ratios: alphas[..trials].to_vec(),
                    frame_method: if uniform { FrameMethod::Uniform } else { FrameMethod::Random },
                    token_strategy: strat,
                    reuse_frames: reuse,
                };
                let scorer = |frames: &[usize]| -> Result<Vec<f64>> {
                    Ok((0..frames.len() * m_patch).map(|i| ((i * 7919) % 13) as f64).collect())
                };
                let plans = build_trial_plans(&c, &Rng::new(seed), Some(&scorer)).unwrap();
                prop_assert_eq!(plans.len(), trials);
                let len = n * m_patch;
                for p in &plans {
                    prop_assert_eq!(p.frame_indices.len(), n);
                    prop_assert!(p.frame_indices.windows(2).all(|w| w[0] < w[1]));
                    prop_assert!(p.frame_indices.iter().all(|&i| i < f));
                    prop_assert_eq!(p.token_keep.len(), retained_len(len, p.alpha));
                    prop_assert!(p.token_keep.windows(2).all(|w| w[0] < w[1]));
                    prop_assert!(p.token_keep.iter().all(|&i| i < len));
                    if strat == TokenStrategy::RandFrm {
                        let full = p.token_keep.len() / m_patch * m_patch;
                        for block in p.token_keep[..full].chunks(m_patch) {
                            prop_assert_eq!(block[0] % m_patch, 0);
                            prop_assert_eq!(block[m_patch - 1], block[0] + m_patch - 1);
                        }
                    }
                }
                if reuse {
                    prop_assert!(plans.iter().all(|p| p.frame_indices == plans[0].frame_indices));
                }
            }

            #[test]
            fn attn_top_matches_sort_oracle(scores in prop::collection::vec(0u8..6, 1..60), alpha in 0.01f64..=1.0) {
                let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
                let len = scores.len();
                let keep = subsample_tokens(len, 1, alpha, TokenStrategy::AttnTop, &mut Rng::new(0), Some(&scores)).unwrap();
                // Oracle: threshold on the k-th largest score, take all above it
                // plus the lowest-index ties.
                let k = retained_len(len, alpha);
                let mut sorted = scores.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let mut expect = Vec::new();
                if k > 0 {
                    let cut = sorted[k - 1];
                    let above: Vec<usize> = (0..len).filter(|&i| scores[i] > cut).collect();
                    let ties = (0..len).filter(|&i| scores[i] == cut).take(k - above.len());
                    expect = above.into_iter().chain(ties).collect();
                    expect.sort_unstable();
                }
                prop_assert_eq!(keep, expect);
            }
        }
    }
}
