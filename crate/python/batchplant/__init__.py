"""Python interface to the batch plant scheduling toolkit.

Loads the compiled extension module from the Cargo target directory
(release or debug, whichever was built most recently) and re-exports its
API. Point BATCHPLANT_NATIVE at a specific .so to override the search.
"""

import os
import sys
from importlib.machinery import ExtensionFileLoader
from importlib.util import module_from_spec, spec_from_loader
from pathlib import Path

_NATIVE = "batchplant_py"


def _candidates():
    override = os.environ.get("BATCHPLANT_NATIVE")
    if override:
        yield Path(override)
        return
    roots = [Path(__file__).resolve().parents[2] / "target"]
    cargo_target = os.environ.get("CARGO_TARGET_DIR")
    if cargo_target:
        roots.append(Path(cargo_target))
    names = ("libbatchplant_py.so", "batchplant_py.so", "libbatchplant_py.dylib")
    for root in roots:
        for profile in ("release", "debug"):
            for name in names:
                yield root / profile / name


def _load():
    if _NATIVE in sys.modules:
        return sys.modules[_NATIVE]
    found = [path for path in _candidates() if path.exists()]
    if not found:
        raise ImportError(
            "compiled extension not found; build it with "
            "`cargo build -p batchplant-py --release`"
        )
    path = max(found, key=lambda p: p.stat().st_mtime)
    loader = ExtensionFileLoader(_NATIVE, str(path))
    spec = spec_from_loader(_NATIVE, loader, origin=str(path))
    module = module_from_spec(spec)
    loader.exec_module(module)
    sys.modules[_NATIVE] = module
    return module


_native = _load()

Instance = _native.Instance
Policy = _native.Policy
Episode = _native.Episode
ReturnStats = _native.ReturnStats
rollout_episode = _native.rollout_episode
evaluate = _native.evaluate
experiment_preset = _native.experiment_preset
train = _native.train
validate = _native.validate
run_experiment = _native.run_experiment
check_schedule = _native.check_schedule
gantt_svg = _native.gantt_svg
decision_latency = _native.decision_latency
__version__ = _native.__version__

__all__ = [
    "Instance",
    "Policy",
    "Episode",
    "ReturnStats",
    "rollout_episode",
    "evaluate",
    "experiment_preset",
    "train",
    "validate",
    "run_experiment",
    "check_schedule",
    "gantt_svg",
    "decision_latency",
]
