"""Wiring experts into a layered network with latched messaging.

Each tick runs two phases.  Phase 1 walks the layers bottom-up: layer 0
experts see their slice of the raw observation, higher layers see the
concatenated outputs of the layer below.  Phase 2 latches every context and
goal message produced this tick, to be consumed on the next one.  Feedback
therefore always arrives one tick late, which keeps a single tick free of
same-tick loops.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .expert import Expert, StepResult

Edge = tuple[tuple[int, int], tuple[int, int]]


@dataclass(frozen=True)
class TickResult:
    action: np.ndarray | None
    results: dict[tuple[int, int], StepResult]

    def fired(self) -> dict[tuple[int, int], bool]:
        return {key: res.fired for key, res in self.results.items()}


class Network:
    """A stack of expert layers plus context/goal wiring.

    ``experts`` is a list of layers, bottom first.  ``receptive_fields`` maps
    ``(layer, index)`` to the half-open input range the expert reads.
    ``context_edges`` and ``goal_edges`` are (provider, consumer) pairs of
    such keys; a goal edge must duplicate an existing context edge.  The
    provider order of ``context_edges`` fixes the provider indices seen by
    each consumer.
    """

    def __init__(self, experts: list[list[Expert]],
                 receptive_fields: dict[tuple[int, int], tuple[int, int]],
                 context_edges: list[Edge], goal_edges: list[Edge],
                 obs_dim: int):
        self.experts = experts
        self.receptive_fields = dict(receptive_fields)
        self.context_edges = list(context_edges)
        self.goal_edges = list(goal_edges)
        self.obs_dim = int(obs_dim)

        self._providers: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for provider, consumer in self.context_edges:
            self._providers.setdefault(consumer, []).append(provider)
        for key, ex in self.iter_experts():
            sizes = tuple(self._expert(p).co_dim for p in self._providers.get(key, []))
            if ex.provider_sizes != sizes:
                raise ValueError(
                    f"expert {key} was built with provider sizes "
                    f"{ex.provider_sizes}, wiring requires {sizes}")
        goal_set = set(map(self._edge_key, self.goal_edges))
        ctx_set = set(map(self._edge_key, self.context_edges))
        if not goal_set <= ctx_set:
            raise ValueError("every goal edge needs a matching context edge")

        self._latched_ctx = {
            key: [np.zeros(self._expert(p).co_dim) for p in provs]
            for key, provs in self._providers.items()}
        self._latched_goal = {}
        for key, provs in self._providers.items():
            self._latched_goal[key] = [None] * len(provs)
        for provider, consumer in self.goal_edges:
            slot = self._providers[consumer].index(provider)
            self._latched_goal[consumer][slot] = np.zeros(
                self._expert(provider).n_clusters)

        self._tick = 0
        self._trace = b"\x00" * 32

    @staticmethod
    def _edge_key(edge: Edge):
        return tuple(edge[0]), tuple(edge[1])

    def _expert(self, key: tuple[int, int]) -> Expert:
        return self.experts[key[0]][key[1]]

    def iter_experts(self):
        for l, layer in enumerate(self.experts):
            for i, ex in enumerate(layer):
                yield (l, i), ex

    @property
    def n_layers(self) -> int:
        return len(self.experts)

    def layer_input_dim(self, layer: int) -> int:
        if layer == 0:
            return self.obs_dim
        return sum(ex.n_clusters for ex in self.experts[layer - 1])

    def freeze_learning(self) -> None:
        for _, ex in self.iter_experts():
            ex.freeze_learning()

    @property
    def trace_digest(self) -> str:
        """Rolling digest of fired sets and latched messages so far."""
        return self._trace.hex()

    # -- main loop -----------------------------------------------------------

    def tick(self, obs: np.ndarray, reward: float = 0.0) -> TickResult:
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (self.obs_dim,):
            raise ValueError(
                f"observation has shape {obs.shape}, expected ({self.obs_dim},)")
        self._tick += 1
        results: dict[tuple[int, int], StepResult] = {}
        action = None
        layer_input = obs
        for l, layer in enumerate(self.experts):
            outs = []
            for i, ex in enumerate(layer):
                key = (l, i)
                lo, hi = self.receptive_fields[key]
                ctx = tuple(self._latched_ctx.get(key, []))
                goals = self._latched_goal.get(key)
                res = ex.step(layer_input[lo:hi], ctx=ctx,
                              goals=tuple(goals) if goals else None,
                              reward=reward)
                results[key] = res
                outs.append(res.y)
                if ex.action_slice is not None and res.action is not None:
                    action = res.action
            if l + 1 < len(self.experts):
                layer_input = np.concatenate(outs)

        for provider, consumer in self.context_edges:
            slot = self._providers[consumer].index(provider)
            self._latched_ctx[consumer][slot] = results[provider].co
        for provider, consumer in self.goal_edges:
            slot = self._providers[consumer].index(provider)
            self._latched_goal[consumer][slot] = results[provider].go

        self._update_trace(results)
        return TickResult(action=action, results=results)

    def _update_trace(self, results: dict[tuple[int, int], StepResult]) -> None:
        # Chain digests so the trace state stays a plain 32-byte value
        # (a live hash object would not survive pickling into a snapshot).
        h = hashlib.sha256()
        h.update(self._trace)
        h.update(struct.pack("<q", self._tick))
        for key, _ in self.iter_experts():
            h.update(b"\x01" if results[key].fired else b"\x00")
        for key in sorted(self._latched_ctx):
            for vec in self._latched_ctx[key]:
                h.update(vec.tobytes())
        for key in sorted(self._latched_goal):
            for vec in self._latched_goal[key]:
                h.update(b"\x00" if vec is None else vec.tobytes())
        self._trace = h.digest()
