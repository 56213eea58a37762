"""Experiment harness: config-driven runs, replay, and model dumps.

A run couples one environment with one network. Each step the environment is
advanced with the network's latest action (generators ignore it), the new
observation and reward feed one network tick, and per-expert metrics are
recorded. Observations are checked for NaN/inf so a diverging run fails at a
named step instead of corrupting downstream state.

If the bottom layer goes two or more consecutive ticks without any event, the
harness injects a uniformly random one-hot action into action-driven
environments until events resume. Without this valve an agent whose bottom
experts stopped firing would hold still forever (the gridworld only moves
when told to) and the run would never produce another event. The valve uses
its own seeded generator and stays active after the learning cutoff.
"""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .config import ConfigError, build_network
from .environments import build_environment
from .expert import MetricsRow
from .snapshot import save_snapshot
from .topology import Network

METRICS_FIELDS = (
    "step",
    "fired",
    "recoError",
    "predErrorHidden",
    "predErrorObs",
    "rewardAccum",
    "selectedProvider",
    "entropy",
)
METRICS_HEADER = ",".join(METRICS_FIELDS)
FLUSH_EVERY = 1000

__all__ = [
    "METRICS_HEADER",
    "NanError",
    "RunResult",
    "run_experiment",
    "replay_rollout",
    "inspect_dump",
    "check_config",
    "metrics_path",
]


class NanError(RuntimeError):
    """An observation stopped being finite at ``step``."""

    def __init__(self, step: int, message: str):
        super().__init__(message)
        self.step = step


@dataclass
class RunResult:
    network: Network
    environment: Any
    steps: int
    seed: int
    rewards: np.ndarray
    learning_cutoff: int | None
    injected_actions: int
    metrics: dict[tuple[int, int], list[MetricsRow]] = field(default_factory=dict)

    @property
    def trace_digest(self) -> str:
        return self.network.trace_digest


def metrics_path(out_dir: str, layer: int, index: int) -> str:
    return os.path.join(out_dir, f"metrics_l{layer}e{index}.csv")


def _metrics_line(step: int, row: MetricsRow) -> str:
    return ",".join(
        [
            str(step),
            str(int(row.fired)),
            repr(row.reco_error),
            repr(row.pred_error_hidden),
            repr(row.pred_error_obs),
            repr(row.reward_accum),
            str(row.selected_provider),
            repr(row.entropy),
        ]
    )


def _resolve_cutoff(arg, config_run: dict, steps: int):
    if arg != "auto":
        return arg
    if "learning_cutoff" in config_run:
        return config_run["learning_cutoff"]
    return steps // 2


def run_experiment(
    config: dict,
    *,
    seed: int = 0,
    steps: int | None = None,
    out_dir: str | None = None,
    learning_cutoff: int | None | str = "auto",
    keep_metrics: bool = False,
) -> RunResult:
    """Drive one environment/network pair for ``steps`` ticks.

    ``config`` needs ``topology`` and ``environment`` sections; an optional
    ``run`` section may set ``steps`` and ``learning_cutoff``. A cutoff of
    ``None`` disables freezing; when nothing specifies it, learning stops
    halfway through the run. With ``out_dir`` set, per-expert metrics CSVs
    and a final snapshot are written there.
    """
    if "topology" not in config or "environment" not in config:
        raise ConfigError("<root>", "config needs 'topology' and 'environment' sections")
    run_cfg = config.get("run", {})
    if steps is None:
        steps = int(run_cfg.get("steps", 10_000))
    if steps < 1:
        raise ConfigError("run.steps", f"need at least 1 step, got {steps}")
    cutoff = _resolve_cutoff(learning_cutoff, run_cfg, steps)
    if cutoff is not None:
        cutoff = int(cutoff)

    env = build_environment(config["environment"], seed=seed * 3 + 1)
    network = build_network(config["topology"], env.obs_dim, seed=seed)
    valve_rng = np.random.default_rng(seed * 3 + 2)

    takes_actions = hasattr(env, "action_dim")
    writers: dict[tuple[int, int], Any] = {}
    pending: dict[tuple[int, int], list[str]] = {}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for key, _ in network.iter_experts():
            fh = open(metrics_path(out_dir, *key), "w")
            fh.write(METRICS_HEADER + "\n")
            writers[key] = fh
            pending[key] = []

    result = RunResult(
        network=network,
        environment=env,
        steps=steps,
        seed=seed,
        rewards=np.zeros(steps),
        learning_cutoff=cutoff,
        injected_actions=0,
    )
    if keep_metrics:
        result.metrics = {key: [] for key, _ in network.iter_experts()}

    action: np.ndarray | None = None
    silent_ticks = 0
    try:
        for t in range(steps):
            if cutoff is not None and t == cutoff:
                network.freeze_learning()
            if takes_actions and silent_ticks >= 2:
                action = np.zeros(env.action_dim)
                action[valve_rng.integers(0, env.action_dim)] = 1.0
                result.injected_actions += 1
            env_step = env.step(action)
            obs = np.asarray(env_step.observation, dtype=float)
            if not np.all(np.isfinite(obs)):
                bad = int(np.flatnonzero(~np.isfinite(obs))[0])
                raise NanError(t, f"non-finite observation at step {t} (component {bad})")
            tick = network.tick(obs, reward=env_step.reward)
            action = tick.action
            result.rewards[t] = env_step.reward

            bottom_fired = any(
                tick.results[(0, i)].fired for i in range(len(network.experts[0]))
            )
            silent_ticks = 0 if bottom_fired else silent_ticks + 1

            for key, res in tick.results.items():
                if keep_metrics:
                    result.metrics[key].append(res.metrics)
                if writers:
                    pending[key].append(_metrics_line(t, res.metrics))
            if writers and (t + 1) % FLUSH_EVERY == 0:
                for key, fh in writers.items():
                    fh.write("\n".join(pending[key]) + "\n")
                    pending[key].clear()
    finally:
        for key, fh in writers.items():
            if pending[key]:
                fh.write("\n".join(pending[key]) + "\n")
            fh.close()

    if out_dir is not None:
        save_snapshot(
            os.path.join(out_dir, "final.snap"),
            network,
            extra={"config": config, "seed": seed, "steps": steps},
        )
    return result


def replay_rollout(
    network: Network,
    environment,
    prime_steps: int,
    generate_steps: int,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Prime a frozen network from the environment, then free-run it.

    During generation the next observation is assembled from each bottom
    expert's own prediction: the most likely next cluster is decoded through
    the expert's cluster centers into its receptive field. Pixels no bottom
    expert covers stay zero. Returns ``(primed, generated)`` observations.
    """
    network.freeze_learning()
    need = max(ex.tp.t_h + 1 for ex in network.experts[0])
    if prime_steps < need:
        warnings.warn(
            f"priming with {prime_steps} steps, but the bottom layer matches "
            f"{need} events of history; generation may start from an unmatched state",
            stacklevel=2,
        )
    primed: list[np.ndarray] = []
    action = None
    tick = None
    for _ in range(prime_steps):
        env_step = environment.step(action)
        obs = np.asarray(env_step.observation, dtype=float)
        primed.append(obs)
        tick = network.tick(obs, reward=env_step.reward)
        action = tick.action

    generated: list[np.ndarray] = []
    for _ in range(generate_steps):
        obs = np.zeros(network.obs_dim)
        for i, ex in enumerate(network.experts[0]):
            lo, hi = network.receptive_fields[(0, i)]
            if tick is None:
                break
            prediction = tick.results[(0, i)].co[ex.n_clusters :]
            obs[lo:hi] = ex.sp.center(int(np.argmax(prediction)))
        generated.append(obs)
        tick = network.tick(obs)
    return primed, generated


def inspect_dump(network: Network, out_dir: str) -> list[str]:
    """Write per-expert centers, sequence graphs, and usage tables."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for (l, i), ex in network.iter_experts():
        stem = f"l{l}e{i}"
        centers = os.path.join(out_dir, f"centers_{stem}.csv")
        with open(centers, "w") as fh:
            fh.write(ex.sp.centers_csv())
        graph = os.path.join(out_dir, f"sequences_{stem}.dot")
        with open(graph, "w") as fh:
            fh.write(ex.tp.sequence_graph_dot())
        usage = os.path.join(out_dir, f"usage_{stem}.csv")
        with open(usage, "w") as fh:
            fh.write(ex.usage_csv())
        written.extend([centers, graph, usage])
    return written


def check_config(config: dict) -> dict:
    """Validate a config by building it; returns a structural summary."""
    if "topology" not in config or "environment" not in config:
        raise ConfigError("<root>", "config needs 'topology' and 'environment' sections")
    env = build_environment(config["environment"], seed=0)
    network = build_network(config["topology"], env.obs_dim, seed=0)
    return {
        "obs_dim": env.obs_dim,
        "environment": config["environment"].get("kind"),
        "layers": [len(layer) for layer in network.experts],
        "experts": {
            ex.name: {
                "clusters": ex.n_clusters,
                "input": list(network.receptive_fields[key]),
                "providers": len(ex.provider_sizes),
            }
            for key, ex in network.iter_experts()
        },
        "context_edges": len(network.context_edges),
        "goal_edges": len(network.goal_edges),
    }
