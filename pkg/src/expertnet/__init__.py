"""Event-driven hierarchies of clustering experts.

An Expert pairs online winner-takes-all clustering (the spatial pooler) with
an event-driven sequence library (the temporal pooler), adds context and
goal channels, and learns which of its predictions it can make come true.
Experts stack into networks; a predictive group lets several experts split
one additive scene between them.
"""
from __future__ import annotations

from .config import ConfigError, build_network
from .environments import (
    AdditiveSources,
    EnvStep,
    Gridworld,
    HhmmGenerator,
    StreamSource,
    TwoObjectWorld,
    build_environment,
)
from .expert import Expert, MetricsRow, StepResult, apply_theta
from .group import PredictiveGroup
from .harness import (
    METRICS_HEADER,
    NanError,
    RunResult,
    check_config,
    inspect_dump,
    replay_rollout,
    run_experiment,
)
from .snapshot import SnapshotError, load_snapshot, save_snapshot
from .spatial import SpatialPooler, reconstruction_error
from .temporal import TemporalPooler, entropy_bits
from .topology import Network, TickResult

__version__ = "0.1.0"

__all__ = [
    "AdditiveSources",
    "ConfigError",
    "EnvStep",
    "Expert",
    "Gridworld",
    "HhmmGenerator",
    "METRICS_HEADER",
    "MetricsRow",
    "NanError",
    "Network",
    "PredictiveGroup",
    "RunResult",
    "SnapshotError",
    "SpatialPooler",
    "StepResult",
    "StreamSource",
    "TemporalPooler",
    "TickResult",
    "TwoObjectWorld",
    "apply_theta",
    "build_environment",
    "build_network",
    "check_config",
    "entropy_bits",
    "inspect_dump",
    "load_snapshot",
    "replay_rollout",
    "reconstruction_error",
    "run_experiment",
    "save_snapshot",
    "__version__",
]
