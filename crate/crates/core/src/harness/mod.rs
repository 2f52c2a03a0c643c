//! Experiment driver: synthetic needle tasks, single runs, parameter sweeps
//! and coverage checks.

mod plot;
mod report;

pub use plot::{line_chart_svg, speedup_heatmap_svg};
pub use report::{csv_header, csv_row, write_outputs, OutputFormat, Tabular};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregator::{decode, AggregationStrategy, DecodeOptions, DEFAULT_ENTROPY_FLOOR};
use crate::costmodel::{measure, CostReport, MeasureOptions};
use crate::error::{ensure, Error, Result};
use crate::numkernel::{sample_without_replacement, Rng};
use crate::packer::{pack, pack_single, AttentionMaskSpec, TokenId};
use crate::sampler::{
    build_trial_plans, closed_form_coverage, retained_len, sample_frame_indices, FrameMethod,
    SamplerConfig, TokenStrategy, TrialPlan,
};
use crate::toymodel::{
    build_model, embed_frames, Backend, ModelConfig, NeedleProbe, StreamSpec, Transformer,
    VideoTokenStream,
};

/// What the latency window covers, stated in every report.
pub const LATENCY_WINDOW: &str =
    "forward start to first aggregated token; frame embedding and sampling excluded";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    NeedleProbe,
    SeededTransformer,
}

/// Synthetic task and probe parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub needle_count: usize,
    /// Probe gain per visible needle token.
    pub gain: f64,
    /// Probe noise half-width; must stay below `gain`.
    pub noise: f64,
    pub question_len: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            needle_count: 1,
            gain: 1.0,
            noise: 0.1,
            question_len: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub out_dir: Option<String>,
}

#[allow(clippy::derivable_impls)]
impl Default for OutputConfig {
    fn default() -> Self {
        Self { out_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
    pub strategy: AggregationStrategy,
    pub backend: BackendKind,
    pub task: TaskConfig,
    pub repeats: usize,
    pub seed: u64,
    pub decode_steps: usize,
    /// Measure wall-clock latency. Timed reports are not reproducible byte
    /// for byte, so this is off unless asked for.
    pub timing: bool,
    pub timing_repeats: usize,
    pub memory_budget_bytes: Option<u64>,
    pub output: OutputConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            total_frames: 256,
            frames_per_trial: 64,
            patches_per_frame: 16,
            trials: 2,
            ratios: vec![0.5, 0.3],
            frame_method: FrameMethod::Random,
            token_strategy: TokenStrategy::RandTok,
            reuse_frames: false,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            model: ModelConfig::default(),
            strategy: AggregationStrategy::CrossRefine { k: 2 },
            backend: BackendKind::NeedleProbe,
            task: TaskConfig::default(),
            repeats: 200,
            seed: 0,
            decode_steps: 1,
            timing: false,
            timing_repeats: 5,
            memory_budget_bytes: None,
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Cross-field checks; every failure is a [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.sampler.validate().map_err(as_config)?;
        self.model.validate().map_err(as_config)?;
        self.strategy
            .validate(self.sampler.trials, self.model.vocab)
            .map_err(as_config)?;
        ensure!(self.repeats >= 1, Config, "repeats must be at least 1");
        ensure!(
            self.decode_steps >= 1,
            Config,
            "decode_steps must be at least 1"
        );
        ensure!(
            self.task.needle_count <= self.sampler.total_frames,
            Config,
            "needle_count {} exceeds total_frames {}",
            self.task.needle_count,
            self.sampler.total_frames
        );
        ensure!(
            self.task.gain > 0.0 && self.task.noise >= 0.0 && self.task.noise < self.task.gain,
            Config,
            "probe needs gain > 0 and 0 <= noise < gain"
        );
        if self.timing {
            ensure!(
                self.timing_repeats >= 3,
                Config,
                "timing_repeats must be at least 3"
            );
        }
        let uses_transformer = self.backend == BackendKind::SeededTransformer
            || self.sampler.token_strategy == TokenStrategy::AttnTop
            || self.timing;
        if uses_transformer {
            let longest = self.packed_len().max(self.baseline_len());
            ensure!(
                longest <= self.model.max_positions,
                Config,
                "packed length {longest} exceeds max_positions {}",
                self.model.max_positions
            );
        }
        Ok(())
    }

    /// Length of the packed sequence after the last decode step.
    pub fn packed_len(&self) -> usize {
        let l = self.sampler.tokens_per_trial();
        let m = self.sampler.trials;
        self.sampler
            .ratios
            .iter()
            .map(|&a| retained_len(l, a))
            .sum::<usize>()
            + m * self.task.question_len
            + m * (self.decode_steps - 1)
    }

    fn baseline_len(&self) -> usize {
        self.sampler.tokens_per_trial() + self.task.question_len + self.decode_steps - 1
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// A synthetic video with needle frames and a question whose answer the
/// probe emits only when a needle is visible.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub video: Arc<VideoTokenStream>,
    pub needle_frames: Vec<usize>,
    pub question: Vec<TokenId>,
    pub answer: TokenId,
    pub seed: u64,
}

/// Needle frames from `split(0)`, answer from `split(1)`, embeddings from
/// `split(2)` of the task seed.
pub fn gen_task(
    frames: usize,
    patches: usize,
    needle_count: usize,
    seed: u64,
    dim: usize,
    vocab: usize,
    question_len: usize,
) -> Result<SyntheticTask> {
    ensure!(
        needle_count <= frames,
        Contract,
        "{needle_count} needles do not fit in {frames} frames"
    );
    let root = Rng::new(seed);
    let needle_frames = sample_without_replacement(frames, needle_count, &mut root.split(0))?;
    let answer = root.split(1).below(vocab) as TokenId;
    let question = (0..question_len)
        .map(|i| ((i + 1) % vocab) as TokenId)
        .collect();
    let spec = StreamSpec {
        frames,
        patches,
        needle_frames: needle_frames.clone(),
    };
    let video = Arc::new(embed_frames(&spec, dim, &root.split(2))?);
    Ok(SyntheticTask {
        video,
        needle_frames,
        question,
        answer,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub index: usize,
    pub answer: TokenId,
    pub tokens: Vec<TokenId>,
    pub correct: bool,
    /// Per trial: does any kept token come from a needle frame.
    pub trial_covers_needle: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub repeats: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Fraction of tasks where at least one trial kept a needle token.
    pub needle_hit_rate: f64,
    /// `1 - (1 - N/F)^m`; exact for a single needle frame.
    pub closed_form_coverage: f64,
    pub cost: CostReport,
    pub latency_window: String,
    pub outcomes: Vec<TaskOutcome>,
}

fn covers_needle(plan: &TrialPlan, video: &VideoTokenStream) -> bool {
    let m = video.patches();
    plan.token_keep
        .iter()
        .any(|&g| video.needle_frames().contains(&plan.frame_indices[g / m]))
}

/// Attention-received scores of a trial's full, unsubsampled token list,
/// used by the attention-ranked selector.
fn attention_scorer<'a>(
    model: &'a Transformer,
    video: &'a Arc<VideoTokenStream>,
    question: &'a [TokenId],
) -> impl Fn(&[usize]) -> Result<Vec<f64>> + Sync + 'a {
    move |frames: &[usize]| {
        let packed = pack_single(frames, video, question)?;
        let mut scores =
            model.attention_received(&packed, AttentionMaskSpec::BlockDiagonalCausal)?;
        scores.truncate(frames.len() * video.patches());
        Ok(scores)
    }
}

struct Runner {
    cfg: ExperimentConfig,
    transformer: Option<Transformer>,
}

impl Runner {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let needs_model = cfg.backend == BackendKind::SeededTransformer
            || cfg.sampler.token_strategy == TokenStrategy::AttnTop
            || cfg.timing;
        let transformer = if needs_model {
            Some(build_model(&cfg.model)?)
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            transformer,
        })
    }

    fn task_seed(&self, index: usize) -> u64 {
        Rng::new(self.cfg.seed)
            .split(index as u64)
            .split(0)
            .next_u64()
    }

    fn task(&self, index: usize) -> Result<SyntheticTask> {
        let s = &self.cfg.sampler;
        gen_task(
            s.total_frames,
            s.patches_per_frame,
            self.cfg.task.needle_count,
            self.task_seed(index),
            self.cfg.model.model_dim,
            self.cfg.model.vocab,
            self.cfg.task.question_len,
        )
    }

    fn plans(&self, index: usize, task: &SyntheticTask) -> Result<Vec<TrialPlan>> {
        let rng = Rng::new(self.cfg.seed).split(index as u64).split(1);
        match (&self.transformer, self.cfg.sampler.token_strategy) {
            (Some(model), TokenStrategy::AttnTop) => {
                let scorer = attention_scorer(model, &task.video, &task.question);
                build_trial_plans(&self.cfg.sampler, &rng, Some(&scorer))
            }
            _ => build_trial_plans(&self.cfg.sampler, &rng, None),
        }
    }

    fn backend(&self, task: &SyntheticTask) -> Result<Backend> {
        Ok(match self.cfg.backend {
            BackendKind::NeedleProbe => Backend::NeedleProbe(NeedleProbe::new(
                task.answer,
                self.cfg.task.gain,
                self.cfg.task.noise,
                task.seed,
                self.cfg.model.vocab,
            )?),
            BackendKind::SeededTransformer => Backend::SeededTransformer(Box::new(
                self.transformer
                    .clone()
                    .expect("built when the backend needs it"),
            )),
        })
    }

    fn run_one(&self, index: usize) -> Result<TaskOutcome> {
        let task = self.task(index)?;
        let plans = self.plans(index, &task)?;
        let backend = self.backend(&task)?;
        let opts = DecodeOptions {
            steps: self.cfg.decode_steps,
            strategy: self.cfg.strategy,
            stop_token: None,
            mask: AttentionMaskSpec::BlockDiagonalCausal,
        };
        let out = decode(&backend, &plans, &task.video, &task.question, &opts)?;
        Ok(TaskOutcome {
            index,
            answer: task.answer,
            correct: out.tokens.first() == Some(&task.answer),
            tokens: out.tokens,
            trial_covers_needle: plans
                .iter()
                .map(|p| covers_needle(p, &task.video))
                .collect(),
        })
    }

    fn cost(&self) -> Result<CostReport> {
        let task = self.task(0)?;
        let plans = self.plans(0, &task)?;
        let multi = pack(&plans, &task.video, &task.question)?;
        let baseline = pack_single(&plans[0].frame_indices, &task.video, &task.question)?;
        let ratios = &self.cfg.sampler.ratios;
        match (&self.transformer, self.cfg.timing) {
            (Some(model), true) => {
                let backend = Backend::SeededTransformer(Box::new(model.clone()));
                let opts = MeasureOptions {
                    repeats: self.cfg.timing_repeats,
                    strategy: self.cfg.strategy,
                    memory_budget_bytes: self.cfg.memory_budget_bytes,
                };
                measure(&backend, &baseline, &multi, ratios, &opts)
            }
            _ => CostReport::untimed(
                &baseline,
                &multi,
                ratios,
                self.cfg.model.layers,
                self.cfg.model.heads,
            ),
        }
    }
}

/// Runs `repeats` independent tasks. Task `i` depends only on `(config, i)`,
/// so the report is identical however the tasks are scheduled.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let runner = Runner::new(cfg)?;
    let outcomes = (0..cfg.repeats)
        .into_par_iter()
        .map(|i| runner.run_one(i))
        .collect::<Result<Vec<_>>>()?;
    let cost = runner.cost()?;
    let correct = outcomes.iter().filter(|o| o.correct).count();
    let hits = outcomes
        .iter()
        .filter(|o| o.trial_covers_needle.iter().any(|&c| c))
        .count();
    let s = &cfg.sampler;
    Ok(Report {
        config_hash: cfg.hash(),
        repeats: cfg.repeats,
        correct,
        accuracy: correct as f64 / cfg.repeats as f64,
        needle_hit_rate: hits as f64 / cfg.repeats as f64,
        closed_form_coverage: closed_form_coverage(s.total_frames, s.frames_per_trial, s.trials),
        cost,
        latency_window: LATENCY_WINDOW.to_string(),
        outcomes,
    })
}

/// Sweep dimensions, each mirroring one ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Two trials, every `(alpha_1, alpha_2)` pair from the list.
    AlphaGrid(Vec<f64>),
    /// Trial counts, all at the base config's first ratio, mean logits.
    MValues(Vec<usize>),
    /// Cross-refinement top-k values with two trials.
    KValues(Vec<usize>),
    /// The six frame/token/reuse settings of the sampling ablation.
    StrategyMatrix,
    /// Mean, confidence-weighted and cross-refinement at two trials.
    Aggregators,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::AlphaGrid(_) => "alpha_grid",
            SweepAxis::MValues(_) => "m_values",
            SweepAxis::KValues(_) => "k_values",
            SweepAxis::StrategyMatrix => "strategy_matrix",
            SweepAxis::Aggregators => "aggregators",
        }
    }

    /// Parses a CLI axis name plus optional comma-separated values.
    pub fn parse(name: &str, values: Option<&str>) -> Result<Self> {
        fn list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
            s.split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("cannot parse sweep value {v:?}")))
                })
                .collect()
        }
        Ok(match name {
            "alpha_grid" => SweepAxis::AlphaGrid(match values {
                Some(v) => list(v)?,
                None => vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            }),
            "m_values" => SweepAxis::MValues(match values {
                Some(v) => list(v)?,
                None => vec![1, 2, 3, 4],
            }),
            "k_values" => SweepAxis::KValues(match values {
                Some(v) => list(v)?,
                None => vec![1, 2, 5, 10, 20, 50, 64],
            }),
            "strategy_matrix" => SweepAxis::StrategyMatrix,
            "aggregators" => SweepAxis::Aggregators,
            other => return Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        })
    }
}

/// The sampling ablation rows: frame method, token strategy, frame reuse.
pub const STRATEGY_MATRIX: [(&str, FrameMethod, TokenStrategy, bool); 6] = [
    (
        "rand-tok-m2",
        FrameMethod::Random,
        TokenStrategy::RandTok,
        false,
    ),
    (
        "rand-tok-m1",
        FrameMethod::Random,
        TokenStrategy::RandTok,
        true,
    ),
    (
        "uni-tok-m2",
        FrameMethod::Uniform,
        TokenStrategy::RandTok,
        false,
    ),
    (
        "uni-tok-m1",
        FrameMethod::Uniform,
        TokenStrategy::RandTok,
        true,
    ),
    (
        "rand-frm-m2",
        FrameMethod::Random,
        TokenStrategy::RandFrm,
        false,
    ),
    (
        "rand-attn-m2",
        FrameMethod::Random,
        TokenStrategy::AttnTop,
        false,
    ),
];

/// Grid points of `axis` as `(label, values, config)`.
pub fn grid(
    axis: &SweepAxis,
    base: &ExperimentConfig,
) -> Vec<(String, Vec<f64>, ExperimentConfig)> {
    let two_ratios = if base.sampler.ratios.len() == 2 {
        base.sampler.ratios.clone()
    } else {
        vec![0.5, 0.3]
    };
    let with = |f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    match axis {
        SweepAxis::AlphaGrid(alphas) => alphas
            .iter()
            .flat_map(|&a1| alphas.iter().map(move |&a2| (a1, a2)))
            .map(|(a1, a2)| {
                let c = with(&|c| {
                    c.sampler.trials = 2;
                    c.sampler.ratios = vec![a1, a2];
                    if !matches!(c.strategy, AggregationStrategy::CrossRefine { .. })
                        && c.strategy.validate(2, c.model.vocab).is_err()
                    {
                        c.strategy = AggregationStrategy::default_for(2);
                    }
                });
                (format!("{a1};{a2}"), vec![a1, a2], c)
            })
            .collect(),
        SweepAxis::MValues(ms) => ms
            .iter()
            .map(|&m| {
                let alpha = base.sampler.ratios.first().copied().unwrap_or(0.5);
                let c = with(&|c| {
                    c.sampler.trials = m;
                    c.sampler.ratios = vec![alpha; m];
                    c.strategy = AggregationStrategy::MeanLogits;
                });
                (m.to_string(), vec![m as f64], c)
            })
            .collect(),
        SweepAxis::KValues(ks) => ks
            .iter()
            .map(|&k| {
                let c = with(&|c| {
                    c.sampler.trials = 2;
                    c.sampler.ratios = two_ratios.clone();
                    c.strategy = AggregationStrategy::CrossRefine { k };
                });
                (k.to_string(), vec![k as f64], c)
            })
            .collect(),
        SweepAxis::StrategyMatrix => STRATEGY_MATRIX
            .iter()
            .enumerate()
            .map(|(i, &(name, frames, tokens, reuse))| {
                let c = with(&|c| {
                    c.sampler.trials = 2;
                    c.sampler.ratios = two_ratios.clone();
                    c.sampler.frame_method = frames;
                    c.sampler.token_strategy = tokens;
                    c.sampler.reuse_frames = reuse;
                });
                (name.to_string(), vec![i as f64], c)
            })
            .collect(),
        SweepAxis::Aggregators => [
            ("mean_logits", AggregationStrategy::MeanLogits),
            (
                "confidence_weighted",
                AggregationStrategy::ConfidenceWeighted {
                    epsilon: DEFAULT_ENTROPY_FLOOR,
                },
            ),
            ("cross_refine", AggregationStrategy::CrossRefine { k: 2 }),
        ]
        .into_iter()
        .enumerate()
        .map(|(i, (name, strategy))| {
            let c = with(&|c| {
                c.sampler.trials = 2;
                c.sampler.ratios = two_ratios.clone();
                c.strategy = strategy;
            });
            (name.to_string(), vec![i as f64], c)
        })
        .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub label: String,
    pub values: Vec<f64>,
    pub config_hash: String,
    pub report: Option<Report>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<SweepRow>,
}

/// Runs every grid point. A failing point is recorded in its row and the
/// sweep carries on. Rows are in grid order.
pub fn sweep(axis: &SweepAxis, base: &ExperimentConfig) -> SweepTable {
    let points = grid(axis, base);
    let run = |(index, (label, values, cfg)): (usize, (String, Vec<f64>, ExperimentConfig))| {
        let result = run_experiment(&cfg);
        SweepRow {
            index,
            label,
            values,
            config_hash: cfg.hash(),
            error: result.as_ref().err().map(ToString::to_string),
            report: result.ok(),
        }
    };
    // Timed points must not compete for cores.
    let rows = if base.timing {
        points.into_iter().enumerate().map(run).collect()
    } else {
        points.into_par_iter().enumerate().map(run).collect()
    };
    SweepTable {
        axis: axis.name().to_string(),
        rows,
    }
}

/// Writes the chart belonging to the table's axis, if it has one:
/// `speedup_heatmap.svg`, `m_scaling.svg` or `topk_sweep.svg`.
pub fn write_sweep_plots(table: &SweepTable, dir: &Path) -> Result<Vec<PathBuf>> {
    let accuracy_points = || -> Vec<(f64, f64)> {
        table
            .rows
            .iter()
            .filter_map(|r| r.report.as_ref().map(|rep| (r.values[0], rep.accuracy)))
            .collect()
    };
    let (name, svg) = match table.axis.as_str() {
        "alpha_grid" => {
            let mut alphas: Vec<f64> = table.rows.iter().map(|r| r.values[0]).collect();
            alphas.dedup();
            let n = alphas.len();
            let timed = table.rows.iter().all(|r| {
                r.report
                    .as_ref()
                    .is_some_and(|x| x.cost.measured_speedup.is_some())
            });
            let mut values = vec![vec![f64::NAN; n]; n];
            for (i, row) in table.rows.iter().enumerate() {
                if let Some(rep) = &row.report {
                    values[i / n][i % n] = if timed {
                        rep.cost.measured_speedup.unwrap_or(f64::NAN)
                    } else {
                        rep.cost.theoretical_speedup
                    };
                }
            }
            let title = if timed {
                "measured speedup"
            } else {
                "theoretical speedup"
            };
            (
                "speedup_heatmap.svg",
                speedup_heatmap_svg(title, &alphas, &values),
            )
        }
        "m_values" => (
            "m_scaling.svg",
            line_chart_svg("accuracy vs trials", "m", "accuracy", &accuracy_points()),
        ),
        "k_values" => (
            "topk_sweep.svg",
            line_chart_svg("accuracy vs top-k", "k", "accuracy", &accuracy_points()),
        ),
        _ => return Ok(Vec::new()),
    };
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, svg)?;
    Ok(vec![path])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub frames: usize,
    pub frames_per_trial: usize,
    pub trials: usize,
    pub draws: usize,
    pub empirical: f64,
    pub closed_form: f64,
    pub z: f64,
}

/// Monte-Carlo rate at which `m` random trials include frame 0, against
/// the closed form.
pub fn coverage_report(
    frames: usize,
    frames_per_trial: usize,
    trials: usize,
    draws: usize,
    seed: u64,
) -> Result<CoverageReport> {
    ensure!(
        draws >= 10_000,
        Contract,
        "coverage needs at least 10000 draws"
    );
    ensure!(trials >= 1, Contract, "at least one trial");
    ensure!(
        frames_per_trial <= frames && frames >= 1,
        Contract,
        "frames_per_trial {frames_per_trial} exceeds {frames}"
    );
    let root = Rng::new(seed);
    let hits = (0..draws)
        .into_par_iter()
        .map(|d| -> Result<bool> {
            let draw = root.split(d as u64);
            for t in 0..trials {
                let picked = sample_frame_indices(
                    frames,
                    frames_per_trial,
                    FrameMethod::Random,
                    &mut draw.split(t as u64),
                )?;
                if picked.first() == Some(&0) {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&h| h)
        .count();
    let empirical = hits as f64 / draws as f64;
    let closed_form = closed_form_coverage(frames, frames_per_trial, trials);
    let var = closed_form * (1.0 - closed_form) / draws as f64;
    let diff = empirical - closed_form;
    let z = if var > 0.0 {
        diff / var.sqrt()
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(CoverageReport {
        frames,
        frames_per_trial,
        trials,
        draws,
        empirical,
        closed_form,
        z,
    })
}

/// Wall-clock comparison on the seeded transformer for the config's
/// sampler settings.
pub fn bench(cfg: &ExperimentConfig) -> Result<CostReport> {
    let timed = ExperimentConfig {
        timing: true,
        ..cfg.clone()
    };
    Runner::new(&timed)?.cost()
}
