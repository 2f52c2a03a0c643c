"""Smoke test for the t3s Python extension.

Build and install first, e.g.:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/t3s-*.whl
"""

import json
import math

import t3s


def main():
    # Cost model: alpha = (0.6, 0.6) gives sum of squares 0.72.
    base, multi, sum_sq, speedup = t3s.theoretical_costs(1024, [0.6, 0.6])
    assert abs(sum_sq - 0.72) < 1e-12
    assert abs(speedup - 1 / 0.72) < 1e-12

    # Aggregators.
    rows = [[5.0, 4.0, 1.0, 0.0], [1.0, 0.0, 4.0, 5.0]]
    fused, token = t3s.mean_logits(rows)
    assert fused == [3.0, 2.0, 2.5, 2.5] and token == 0
    assert t3s.cross_refine(rows[0], rows[1], 2) == 0
    assert t3s.cross_refine(rows[1], rows[0], 2) == 2
    assert t3s.aggregate('{"CrossRefine": {"k": 4}}', rows) == 3
    _, token = t3s.confidence_weighted(rows)
    assert 0 <= token < 4

    # Sampling, packing and the packed-equals-solo property.
    task = t3s.Task(frames=32, patches=4, needle_count=2, seed=7, dim=16, vocab=24)
    sampler = {
        "total_frames": 32, "frames_per_trial": 8, "patches_per_frame": 4,
        "trials": 3, "ratios": [0.5, 0.75, 1.0], "frame_method": "Random",
        "token_strategy": "RandTok", "reuse_frames": False,
    }
    plans = t3s.sample_plans(json.dumps(sampler), 1)
    assert len(json.loads(plans)) == 3
    packing = t3s.Packing(task, plans)
    model = t3s.Model(layers=2, model_dim=16, heads=2, vocab=24, max_positions=512, init_seed=3)
    joint = model.forward(packing)
    worst = 0.0
    for i, (start, length, _) in enumerate(packing.segments()):
        solo = model.forward(packing.segment_alone(i))
        for j in range(length):
            worst = max(worst, max(abs(a - b) for a, b in zip(joint[start + j], solo[j])))
    assert worst <= 1e-9, worst
    assert len(model.segment_logits(packing)) == 3
    scores = model.attention_received(packing)
    assert len(scores) == len(packing) and all(math.isfinite(s) for s in scores)

    probe = t3s.Probe(task.answer, 1.0, 0.1, 0, 24)
    assert len(probe.segment_logits(packing)) == 3

    # Coverage against the closed form.
    empirical, closed, z = t3s.coverage_report(100, 25, 2, 10_000, 5)
    assert abs(closed - t3s.closed_form_coverage(100, 25, 2)) < 1e-15
    assert abs(z) < 4

    # Experiments are deterministic.
    cfg = json.loads(t3s.default_config())
    cfg["repeats"] = 20
    cfg["sampler"].update(total_frames=64, frames_per_trial=16, patches_per_frame=4)
    a = t3s.run_experiment(json.dumps(cfg))
    assert a == t3s.run_experiment(json.dumps(cfg))
    report = json.loads(a)
    assert 0.0 <= report["accuracy"] <= 1.0
    table = json.loads(t3s.sweep(json.dumps(cfg), "k_values", "1,2"))
    assert len(table["rows"]) == 2

    try:
        t3s.cross_refine([1.0, 2.0], [1.0, 2.0], 5)
    except ValueError:
        pass
    else:
        raise AssertionError("k outside 1..=D must raise ValueError")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
