"""Several experts explaining one observation together.

Additive scenes (multiple independent sources summed into one frame) defeat a
single vector quantizer: it needs a cluster per combination.  Here a small
group of experts shares the frame and settles, over a few iterations, on a
decomposition: each expert reconstructs its part, and the others only see
what remains unexplained.

Two settling rules are supported.  ``rao`` works on the subtractive residual
``e = obs - sum(o_hat)`` and feeds each expert ``o_hat_i + mu * e``;
``pcbc`` uses the divisive mismatch ``e = obs / (eps2 + sum(o_hat))`` and
feeds ``(eps1 + o_hat_i) * e``.  After the final iteration each expert runs a
normal step on its settled input, so event gating, sequence learning, and the
clustering buffer all see only that expert's share of the scene.
"""

from __future__ import annotations

import numpy as np

from .expert import Expert, StepResult

RULES = ("rao", "pcbc")


class PredictiveGroup:
    """Experts jointly decomposing one observation stream.

    Parameters
    ----------
    experts:
        The member experts; all must read the full frame.
    rule:
        ``rao`` (subtractive residual) or ``pcbc`` (divisive mismatch).
    n_iterations:
        Settling passes per step.
    mu:
        Residual step size for the ``rao`` rule.
    eps1, eps2:
        Small constants keeping the ``pcbc`` rule away from zero.
    """

    def __init__(self, experts: list[Expert], *, rule: str = "rao",
                 n_iterations: int = 5, mu: float = 0.5,
                 eps1: float = 1e-3, eps2: float = 1e-3):
        if rule not in RULES:
            raise ValueError(f"unknown rule: {rule!r}, expected one of {RULES}")
        if not experts:
            raise ValueError("a group needs at least one expert")
        if n_iterations < 1:
            raise ValueError("n_iterations must be at least 1")
        dims = {ex.obs_dim for ex in experts}
        if len(dims) != 1:
            raise ValueError(f"experts disagree on observation dim: {sorted(dims)}")
        self.experts = list(experts)
        self.rule = rule
        self.n_iterations = int(n_iterations)
        self.mu = float(mu)
        self.eps1 = float(eps1)
        self.eps2 = float(eps2)
        self.obs_dim = experts[0].obs_dim
        self._prev_winner: list[int | None] = [None] * len(experts)
        self.last_error = np.zeros(self.obs_dim)

    def step(self, obs: np.ndarray, reward: float = 0.0) -> list[StepResult]:
        """Settle the group on ``obs`` and advance every member expert."""
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (self.obs_dim,):
            raise ValueError(
                f"observation has shape {obs.shape}, expected ({self.obs_dim},)")
        o_hat = []
        for ex, w in zip(self.experts, self._prev_winner):
            o_hat.append(np.zeros(self.obs_dim) if w is None else ex.sp.center(w))
        inputs = [None] * len(self.experts)
        for _ in range(self.n_iterations):
            if self.rule == "rao":
                err = obs - np.sum(o_hat, axis=0)
                inputs = [oh + self.mu * err for oh in o_hat]
            else:
                # the divisive rule works on firing-rate-like quantities, so
                # negative center components are clipped before they enter it
                pos = [np.maximum(oh, 0.0) for oh in o_hat]
                err = obs / (self.eps2 + np.sum(pos, axis=0))
                inputs = [(self.eps1 + p) * err for p in pos]
            for i, ex in enumerate(self.experts):
                o_hat[i] = ex.sp.center(ex.sp.winner(inputs[i]))
        self.last_error = err
        results = []
        for i, ex in enumerate(self.experts):
            res = ex.step(inputs[i], reward=reward)
            self._prev_winner[i] = int(np.argmax(res.co[: ex.n_clusters]))
            results.append(res)
        return results

    def freeze_learning(self) -> None:
        for ex in self.experts:
            ex.freeze_learning()
