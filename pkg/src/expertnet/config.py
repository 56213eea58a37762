"""Config dictionaries to runtime objects, with path-annotated errors."""

from __future__ import annotations

import numpy as np

from .expert import Expert, THETA_KINDS
from .topology import Network

LAYER_KEYS = {
    "experts", "clusters", "t_h", "t_f", "m", "capacity", "epsilon",
    "epsilon_c", "prior_decay", "learning_rate", "buffer_size",
    "boost_threshold", "boost_step", "learn_interval", "theta",
    "theta_epsilon", "epsilon_explore", "discount", "reward_rate",
    "receptive_fields",
}

TOPOLOGY_KEYS = {"layers", "context_edges", "goal_edges", "action_slice"}


class ConfigError(Exception):
    """A configuration problem, pointing at the offending path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _parse_theta(raw, path: str) -> tuple[str, float, str | None, float | None]:
    if isinstance(raw, str):
        kind, eps, frozen, frozen_eps = raw, 0.1, None, None
    elif isinstance(raw, dict):
        kind = raw.get("kind", "identity")
        eps = raw.get("epsilon", 0.1)
        frozen = raw.get("frozen_kind")
        frozen_eps = raw.get("frozen_epsilon")
    else:
        raise ConfigError(path, "theta must be a string or an object")
    for k in (kind, frozen):
        if k is not None and k not in THETA_KINDS:
            raise ConfigError(path, f"unknown theta kind {k!r}, "
                                    f"expected one of {', '.join(THETA_KINDS)}")
    return kind, float(eps), frozen, None if frozen_eps is None else float(frozen_eps)


def _parse_edges(raw, path: str, n_per_layer: list[int]) -> list:
    edges = []
    seen = set()
    for j, item in enumerate(raw):
        here = f"{path}[{j}]"
        try:
            (lp, ip), (lc, ic) = item
            provider = (int(lp), int(ip))
            consumer = (int(lc), int(ic))
        except (TypeError, ValueError):
            raise ConfigError(here, "expected [[layer, index], [layer, index]]")
        for (l, i) in (provider, consumer):
            if not (0 <= l < len(n_per_layer)) or not (0 <= i < n_per_layer[l]):
                raise ConfigError(here, f"no expert at layer {l}, index {i}")
        if provider[0] <= consumer[0]:
            raise ConfigError(here, "provider must sit in a higher layer "
                                    "than its consumer")
        key = (provider, consumer)
        if key in seen:
            raise ConfigError(here, "duplicate edge")
        seen.add(key)
        edges.append(key)
    return edges


def build_network(topology: dict, obs_dim: int, seed=None) -> Network:
    """Construct a Network from its config dictionary.

    Every validation failure raises ConfigError naming the config path.
    """
    for key in topology:
        if key not in TOPOLOGY_KEYS:
            raise ConfigError(f"topology.{key}", "unknown key")
    layers_cfg = topology.get("layers")
    if not layers_cfg:
        raise ConfigError("topology.layers", "at least one layer is required")

    n_per_layer = []
    for l, cfg in enumerate(layers_cfg):
        path = f"topology.layers[{l}]"
        if not isinstance(cfg, dict):
            raise ConfigError(path, "layer must be an object")
        for key in cfg:
            if key not in LAYER_KEYS:
                raise ConfigError(f"{path}.{key}", "unknown key")
        n_per_layer.append(int(cfg.get("experts", 1)))

    context_edges = _parse_edges(topology.get("context_edges", []),
                                 "topology.context_edges", n_per_layer)
    goal_edges = _parse_edges(topology.get("goal_edges", []),
                              "topology.goal_edges", n_per_layer)
    ctx_set = set(context_edges)
    for j, edge in enumerate(goal_edges):
        if edge not in ctx_set:
            raise ConfigError(f"topology.goal_edges[{j}]",
                              "goal edges must follow existing context edges")

    providers: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for provider, consumer in context_edges:
        providers.setdefault(consumer, []).append(provider)

    action_slice = topology.get("action_slice")
    if action_slice is not None:
        try:
            a_lo, a_hi = (int(v) for v in action_slice)
        except (TypeError, ValueError):
            raise ConfigError("topology.action_slice", "expected [start, stop]")
        if not (0 <= a_lo < a_hi <= obs_dim):
            raise ConfigError(
                "topology.action_slice",
                f"range [{a_lo}, {a_hi}) does not fit the observation "
                f"(dim {obs_dim})")

    seeds = iter(np.random.SeedSequence(seed).spawn(sum(n_per_layer)))
    experts: list[list[Expert]] = []
    receptive_fields: dict[tuple[int, int], tuple[int, int]] = {}
    clusters_below = 0
    acting_owner = None
    for l, cfg in enumerate(layers_cfg):
        path = f"topology.layers[{l}]"
        n_experts = n_per_layer[l]
        if n_experts < 1:
            raise ConfigError(f"{path}.experts", "must be at least 1")
        clusters = int(cfg.get("clusters", 16))
        if clusters < 1:
            raise ConfigError(f"{path}.clusters", "must be at least 1")
        t_h = int(cfg.get("t_h", 1))
        t_f = int(cfg.get("t_f", 1))
        if t_h < 0:
            raise ConfigError(f"{path}.t_h", "must be non-negative")
        if t_f < 1:
            raise ConfigError(f"{path}.t_f", "must be at least 1")
        if "m" in cfg and int(cfg["m"]) != t_h + 1 + t_f:
            raise ConfigError(
                f"{path}.m",
                f"window length {cfg['m']} is inconsistent with t_h={t_h}, "
                f"t_f={t_f} (expected {t_h + 1 + t_f})")
        theta_kind, theta_eps = _parse_theta(cfg.get("theta", "identity"),
                                             f"{path}.theta")
        if "theta_epsilon" in cfg:
            theta_eps = float(cfg["theta_epsilon"])

        input_dim = obs_dim if l == 0 else clusters_below
        rf_cfg = cfg.get("receptive_fields")
        if rf_cfg is None:
            rf_cfg = [[0, input_dim]] * n_experts
        if len(rf_cfg) != n_experts:
            raise ConfigError(f"{path}.receptive_fields",
                              f"expected {n_experts} ranges, got {len(rf_cfg)}")
        layer_experts = []
        for i in range(n_experts):
            rf_path = f"{path}.receptive_fields[{i}]"
            try:
                lo, hi = (int(v) for v in rf_cfg[i])
            except (TypeError, ValueError):
                raise ConfigError(rf_path, "expected [start, stop]")
            if not (0 <= lo < hi <= input_dim):
                raise ConfigError(
                    rf_path,
                    f"range [{lo}, {hi}) does not fit the layer input "
                    f"(dim {input_dim})")
            receptive_fields[(l, i)] = (lo, hi)

            expert_slice = None
            if action_slice is not None and l == 0 and lo <= a_lo and a_hi <= hi:
                if acting_owner is not None:
                    raise ConfigError(
                        "topology.action_slice",
                        f"covered by receptive fields of both expert "
                        f"{acting_owner} and expert (0, {i})")
                acting_owner = (0, i)
                expert_slice = (a_lo - lo, a_hi - lo)

            provider_sizes = tuple(
                2 * int(layers_cfg[p_l].get("clusters", 16))
                for (p_l, _p_i) in providers.get((l, i), []))
            layer_experts.append(Expert(
                f"l{l}e{i}", clusters, hi - lo,
                t_h=t_h, t_f=t_f,
                capacity=int(cfg.get("capacity", 512)),
                epsilon=float(cfg.get("epsilon", 0.01)),
                epsilon_c=float(cfg.get("epsilon_c", 0.01)),
                prior_decay=float(cfg.get("prior_decay", 0.999)),
                learning_rate=float(cfg.get("learning_rate", 0.1)),
                buffer_size=int(cfg.get("buffer_size", 256)),
                boost_threshold=int(cfg.get("boost_threshold", 100)),
                boost_step=float(cfg.get("boost_step", 0.1)),
                learn_interval=int(cfg.get("learn_interval", 1)),
                theta=theta_kind, theta_epsilon=theta_eps,
                epsilon_explore=float(cfg.get("epsilon_explore", 0.05)),
                discount=float(cfg.get("discount", 0.9)),
                reward_rate=float(cfg.get("reward_rate", 0.1)),
                provider_sizes=provider_sizes,
                action_slice=expert_slice,
                rng=np.random.default_rng(next(seeds))))
        experts.append(layer_experts)
        clusters_below = clusters * n_experts

    if action_slice is not None and acting_owner is None:
        raise ConfigError(
            "topology.action_slice",
            "no bottom-layer receptive field covers the action range")

    return Network(experts, receptive_fields, context_edges, goal_edges,
                   obs_dim=obs_dim)
