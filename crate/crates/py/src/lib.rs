//! Python bindings. Structured results (plans, reports, sweeps) cross the
//! boundary as JSON strings; numeric results as lists and tuples.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use t3s_core::aggregator::{self, AggregationStrategy, TrialLogits};
use t3s_core::harness::{self, ExperimentConfig, SweepAxis, SyntheticTask};
use t3s_core::numkernel::Rng;
use t3s_core::packer::{self, AttentionMaskSpec, PackedSequence, TokenId};
use t3s_core::sampler::{self, SamplerConfig, TrialPlan};
use t3s_core::toymodel::{self, ModelConfig, NeedleProbe, Transformer};
use t3s_core::{costmodel, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::Contract(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mask(name: &str) -> PyResult<AttentionMaskSpec> {
    match name {
        "block" => Ok(AttentionMaskSpec::BlockDiagonalCausal),
        "causal" => Ok(AttentionMaskSpec::Causal),
        other => Err(PyValueError::new_err(format!(
            "unknown mask {other:?}; use 'block' or 'causal'"
        ))),
    }
}

fn matrix_rows(m: &t3s_core::numkernel::Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Synthetic needle video plus question and answer token.
#[pyclass(name = "Task", frozen)]
struct PyTask(SyntheticTask);

#[pymethods]
impl PyTask {
    #[new]
    #[pyo3(signature = (frames, patches, needle_count, seed, dim=64, vocab=64, question_len=4))]
    fn new(
        frames: usize,
        patches: usize,
        needle_count: usize,
        seed: u64,
        dim: usize,
        vocab: usize,
        question_len: usize,
    ) -> PyResult<Self> {
        harness::gen_task(
            frames,
            patches,
            needle_count,
            seed,
            dim,
            vocab,
            question_len,
        )
        .map(Self)
        .map_err(to_py)
    }

    #[getter]
    fn answer(&self) -> TokenId {
        self.0.answer
    }

    #[getter]
    fn needle_frames(&self) -> Vec<usize> {
        self.0.needle_frames.clone()
    }

    #[getter]
    fn question(&self) -> Vec<TokenId> {
        self.0.question.clone()
    }
}

/// Trial plans from a sampler config (JSON) and a seed, returned as JSON.
#[pyfunction]
#[pyo3(signature = (sampler_json, seed))]
fn sample_plans(sampler_json: &str, seed: u64) -> PyResult<String> {
    let cfg: SamplerConfig = serde_json::from_str(sampler_json).map_err(json_err)?;
    let plans = sampler::build_trial_plans(&cfg, &Rng::new(seed), None).map_err(to_py)?;
    serde_json::to_string(&plans).map_err(json_err)
}

/// Packed multi-trial sequence.
#[pyclass(name = "Packing", frozen)]
struct PyPacking(PackedSequence);

#[pymethods]
impl PyPacking {
    /// Packs the trials in `plans_json` over the task's video and question.
    #[new]
    fn new(task: &PyTask, plans_json: &str) -> PyResult<Self> {
        let plans: Vec<TrialPlan> = serde_json::from_str(plans_json).map_err(json_err)?;
        packer::pack(&plans, &task.0.video, &task.0.question)
            .map(Self)
            .map_err(to_py)
    }

    /// The unsubsampled single sequence over `frames`.
    #[staticmethod]
    fn single(task: &PyTask, frames: Vec<usize>) -> PyResult<Self> {
        packer::pack_single(&frames, &Arc::clone(&task.0.video), &task.0.question)
            .map(Self)
            .map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// `(start, len, visual_len)` per segment.
    fn segments(&self) -> Vec<(usize, usize, usize)> {
        self.0
            .segments()
            .iter()
            .map(|s| (s.start, s.len, s.visual_len))
            .collect()
    }

    fn segment_alone(&self, i: usize) -> PyResult<Self> {
        if i >= self.0.num_segments() {
            return Err(PyValueError::new_err("segment index out of range"));
        }
        Ok(Self(self.0.segment_alone(i)))
    }

    fn append_token(&self, token: TokenId, max_positions: usize) -> PyResult<Self> {
        self.0
            .append_token(token, max_positions)
            .map(Self)
            .map_err(to_py)
    }

    fn last_positions(&self) -> Vec<usize> {
        self.0.last_positions()
    }

    fn to_json(&self) -> String {
        self.0.to_debug_json()
    }
}

/// Seeded decoder-only transformer.
#[pyclass(name = "Model", frozen)]
struct PyModel(Transformer);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (layers=4, model_dim=64, heads=4, vocab=64, max_positions=8192, init_seed=0))]
    fn new(
        layers: usize,
        model_dim: usize,
        heads: usize,
        vocab: usize,
        max_positions: usize,
        init_seed: u64,
    ) -> PyResult<Self> {
        let cfg = ModelConfig {
            layers,
            model_dim,
            heads,
            vocab,
            max_positions,
            init_seed,
        };
        toymodel::build_model(&cfg).map(Self).map_err(to_py)
    }

    /// Logits at every position, one list per position.
    #[pyo3(signature = (packing, mask_kind="block"))]
    fn forward(
        &self,
        py: Python<'_>,
        packing: &PyPacking,
        mask_kind: &str,
    ) -> PyResult<Vec<Vec<f64>>> {
        let m = mask(mask_kind)?;
        let out = py.detach(|| self.0.forward(&packing.0, m)).map_err(to_py)?;
        Ok(matrix_rows(&out.logits))
    }

    /// Logits at each segment's last position.
    fn segment_logits(&self, py: Python<'_>, packing: &PyPacking) -> PyResult<Vec<Vec<f64>>> {
        let positions = packing.0.last_positions();
        let out = py
            .detach(|| {
                self.0.forward_at(
                    &packing.0,
                    AttentionMaskSpec::BlockDiagonalCausal,
                    &positions,
                )
            })
            .map_err(to_py)?;
        Ok(matrix_rows(&out.logits))
    }

    fn attention_received(&self, py: Python<'_>, packing: &PyPacking) -> PyResult<Vec<f64>> {
        py.detach(|| {
            self.0
                .attention_received(&packing.0, AttentionMaskSpec::BlockDiagonalCausal)
        })
        .map_err(to_py)
    }

    fn checksum(&self) -> u64 {
        self.0.first_layer_checksum()
    }

    /// Writes `<stem>.json` and `<stem>.bin`.
    fn dump_weights(&self, stem: &str) -> PyResult<()> {
        self.0
            .dump_weights(std::path::Path::new(stem))
            .map_err(to_py)
    }
}

/// Needle-counting probe backend.
#[pyclass(name = "Probe", frozen)]
struct PyProbe(NeedleProbe);

#[pymethods]
impl PyProbe {
    #[new]
    fn new(answer: TokenId, gain: f64, noise: f64, seed: u64, vocab: usize) -> PyResult<Self> {
        NeedleProbe::new(answer, gain, noise, seed, vocab)
            .map(Self)
            .map_err(to_py)
    }

    fn segment_logits(&self, packing: &PyPacking) -> PyResult<Vec<Vec<f64>>> {
        let positions = packing.0.last_positions();
        let out = self
            .0
            .forward_at(
                &packing.0,
                AttentionMaskSpec::BlockDiagonalCausal,
                &positions,
            )
            .map_err(to_py)?;
        Ok(matrix_rows(&out.logits))
    }
}

fn trial_logits(rows: Vec<Vec<f64>>) -> PyResult<TrialLogits> {
    TrialLogits::from_rows(&rows).map_err(to_py)
}

/// Fused logits and token of the trial mean.
#[pyfunction]
fn mean_logits(rows: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, TokenId)> {
    let f = aggregator::mean_logits(&trial_logits(rows)?);
    Ok((f.logits, f.token))
}

#[pyfunction]
#[pyo3(signature = (rows, epsilon=aggregator::DEFAULT_ENTROPY_FLOOR))]
fn confidence_weighted(rows: Vec<Vec<f64>>, epsilon: f64) -> PyResult<(Vec<f64>, TokenId)> {
    let f = aggregator::confidence_weighted(&trial_logits(rows)?, epsilon);
    Ok((f.logits, f.token))
}

#[pyfunction]
fn cross_refine(o1: Vec<f64>, o2: Vec<f64>, k: usize) -> PyResult<TokenId> {
    aggregator::cross_refine(&o1, &o2, k).map_err(to_py)
}

/// Token chosen by a strategy given as JSON, e.g. `{"CrossRefine": {"k": 2}}`.
#[pyfunction]
fn aggregate(strategy_json: &str, rows: Vec<Vec<f64>>) -> PyResult<TokenId> {
    let s: AggregationStrategy = serde_json::from_str(strategy_json).map_err(json_err)?;
    aggregator::aggregate(s, &trial_logits(rows)?).map_err(to_py)
}

/// `(base, multi, sum_sq, speedup)` of the quadratic cost model.
#[pyfunction]
fn theoretical_costs(len: usize, alphas: Vec<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let c = costmodel::theoretical_costs(len, &alphas).map_err(to_py)?;
    Ok((c.base, c.multi, c.sum_sq, c.speedup))
}

#[pyfunction]
fn closed_form_coverage(frames: usize, frames_per_trial: usize, trials: usize) -> f64 {
    sampler::closed_form_coverage(frames, frames_per_trial, trials)
}

/// `(empirical, closed_form, z)`.
#[pyfunction]
#[pyo3(signature = (frames, frames_per_trial, trials, draws=10_000, seed=0))]
fn coverage_report(
    py: Python<'_>,
    frames: usize,
    frames_per_trial: usize,
    trials: usize,
    draws: usize,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let r = py
        .detach(|| harness::coverage_report(frames, frames_per_trial, trials, draws, seed))
        .map_err(to_py)?;
    Ok((r.empirical, r.closed_form, r.z))
}

#[pyfunction]
fn default_config() -> String {
    serde_json::to_string_pretty(&ExperimentConfig::default()).expect("config serializes")
}

/// Runs an experiment config (JSON) and returns the report as JSON.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(json_err)?;
    let report = py.detach(|| harness::run_experiment(&cfg)).map_err(to_py)?;
    serde_json::to_string(&report).map_err(json_err)
}

/// Sweeps one axis; `values` is a comma-separated list or `None` for the
/// axis defaults. Returns the table as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, axis, values=None))]
fn sweep(py: Python<'_>, config_json: &str, axis: &str, values: Option<&str>) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(json_err)?;
    let axis = SweepAxis::parse(axis, values).map_err(to_py)?;
    let table = py.detach(|| harness::sweep(&axis, &cfg));
    serde_json::to_string(&table).map_err(json_err)
}

/// Multi-trial temporal sampling engine.
#[pymodule]
mod t3s {
    #[pymodule_export]
    use super::{
        aggregate, closed_form_coverage, confidence_weighted, coverage_report, cross_refine,
        default_config, mean_logits, run_experiment, sample_plans, sweep, theoretical_costs,
        PyModel, PyPacking, PyProbe, PyTask,
    };
}
