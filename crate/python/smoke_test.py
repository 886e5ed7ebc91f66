#!/usr/bin/env python3
"""Smoke test for the Python bindings: exercises every exported call.

Build the extension first (`cargo build -p batchplant-py`), then run
`python3 python/smoke_test.py`.
"""

import math
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import batchplant as bp


def main() -> int:
    assert bp.Instance.builtins() == ["instance1", "instance2"]
    inst = bp.Instance.load("instance1")
    assert inst.n_tasks == 8 and inst.n_units == 4
    assert inst.state_dim == 2 * 8 + 2 * 4 + 1
    assert inst.horizon == 200 and inst.dt_days == 0.5
    assert len(inst.due_days()) == 8 and len(inst.order_kg()) == 8
    assert bp.Instance.from_json("copy", inst.to_json()).n_tasks == 8
    assert inst.eligible_units(0) != []

    policy = bp.Policy.zeros(inst)
    assert policy.input_dim == inst.state_dim
    assert policy.output_dim == inst.n_units
    assert policy.param_count == len(policy.theta)

    episode = bp.rollout_episode(policy, inst, seed=0)
    assert episode.raw_return == -84.0
    assert episode.penalized_return == -84.0
    assert episode.makespan == 61
    assert not episode.violated
    assert len(episode.schedule()) == 8
    assert bp.check_schedule(episode, inst) == []
    svg = bp.gantt_svg(episode, inst)
    assert svg.startswith("<svg") and ">T1</text>" in svg
    assert "raw_return" in episode.to_json()

    stats = bp.evaluate(
        policy, inst, 16, seed=1, processing_uncertain=True, due_uncertain=True
    )
    assert stats.n == 16
    assert len(stats.z) == len(stats.z_phi) == len(stats.seeds) == 16
    summary = stats.summarize()
    assert summary["n_samples"] == 16
    assert summary["cvar_beta"] <= summary["mean"] + 1e-9
    assert stats.objective("cvar", 0.2) <= stats.objective("mean") + 1e-9
    again = bp.evaluate(
        policy, inst, 16, seed=1, processing_uncertain=True, due_uncertain=True
    )
    assert again.z == stats.z, "evaluation must be seed-deterministic"

    preset = bp.experiment_preset("D8")
    assert preset["objective"] == "cvar(0.2)"
    assert preset["training_samples"] == 50

    result = bp.train("E1", seed=5, population=6, iterations=3)
    trained = result["policy"]
    assert math.isfinite(result["best_j"])
    assert len(result["history"]) == 4
    assert result["history"][-1]["best_j"] >= result["history"][0]["best_j"]

    report = bp.validate(trained, "E1", n_mc=8, seed=2)
    assert report["n_episodes"] == 8
    assert report["summary"]["std"] == 0.0
    assert report["schedule_violations"] == []
    assert len(report["episodes"]) == 8
    assert report["sample_episode"].raw_return == report["episodes"][0]["raw_return"]

    with tempfile.TemporaryDirectory() as tmp:
        saved = Path(tmp) / "policy.json"
        trained.save(saved)
        assert bp.Policy.load(saved).theta == trained.theta
        run = bp.run_experiment(
            "E1", Path(tmp) / "run", seed=5, population=6, iterations=2, n_mc=4
        )
        assert Path(run["metrics_path"]).exists()
        assert math.isfinite(run["best_j"])

    latency = bp.decision_latency(policy, inst, n_steps=100)
    assert latency["n_samples"] == 100
    assert latency["p95_seconds"] > 0.0

    for bad in (lambda: bp.train("M3"), lambda: bp.Instance.load("no_such_instance")):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected a ValueError")

    print("smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
