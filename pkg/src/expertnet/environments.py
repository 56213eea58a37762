"""Deterministic, seedable toy worlds and stream sources.

Every environment produces :class:`EnvStep` records. Generators that do not
react to an agent (hhmm, additive sources, CSV streams) accept and ignore the
``action`` argument of :meth:`step` so the harness can drive all environments
through one interface. ``ground_truth`` carries generator state for evaluation
only; it must never be fed back to the learner.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

__all__ = [
    "EnvStep",
    "HhmmGenerator",
    "Gridworld",
    "TwoObjectWorld",
    "AdditiveSources",
    "StreamSource",
    "build_environment",
]


@dataclass
class EnvStep:
    observation: np.ndarray
    reward: float = 0.0
    reset_flag: bool = False
    ground_truth: Any = None


def _check_stochastic(matrix, name: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {matrix.shape}")
    sums = matrix.sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > 1e-9)[0]
    if bad.size:
        raise ValueError(
            f"{name} row {bad[0]} sums to {sums[bad[0]]!r}, expected 1.0 +- 1e-9"
        )
    if (matrix < 0).any():
        raise ValueError(f"{name} contains negative entries")
    return matrix


class HhmmGenerator:
    """Two-level Markov generator with additive emissions.

    A top chain picks which of the bottom chains advances this step; the
    others hold their state. Every bottom chain emits the row of its emission
    matrix for its current state, and the observation is the sum of those
    emissions plus optional Gaussian noise. With a single bottom chain (and a
    trivial one-state top chain) this degenerates to a plain order-1 HMM.
    """

    def __init__(
        self,
        top_transitions,
        chains: Sequence[dict],
        *,
        noise_sigma: float = 0.0,
        seed: int | None = None,
    ) -> None:
        self.top = _check_stochastic(np.atleast_2d(top_transitions), "top_transitions")
        if len(chains) != self.top.shape[0]:
            raise ValueError(
                f"top chain has {self.top.shape[0]} states but {len(chains)} "
                "bottom chains were given; need one chain per top state"
            )
        self.transitions: list[np.ndarray] = []
        self.emissions: list[np.ndarray] = []
        for idx, chain in enumerate(chains):
            trans = _check_stochastic(np.asarray(chain["transitions"]), f"chain {idx} transitions")
            emit = np.asarray(chain["emissions"], dtype=float)
            if emit.ndim != 2 or emit.shape[0] != trans.shape[0]:
                raise ValueError(
                    f"chain {idx} emissions must have one row per state "
                    f"({trans.shape[0]}), got shape {emit.shape}"
                )
            self.transitions.append(trans)
            self.emissions.append(emit)
        dims = {e.shape[1] for e in self.emissions}
        if len(dims) != 1:
            raise ValueError(f"all emission matrices must share one width, got {sorted(dims)}")
        self.obs_dim = dims.pop()
        self.noise_sigma = float(noise_sigma)
        self._rng = np.random.default_rng(seed)
        self.top_state = 0
        self.states = [0 for _ in chains]

    def step(self, action: np.ndarray | None = None) -> EnvStep:
        active = self.top_state
        chain = self.transitions[active]
        self.states[active] = int(
            self._rng.choice(chain.shape[0], p=chain[self.states[active]])
        )
        self.top_state = int(self._rng.choice(self.top.shape[0], p=self.top[self.top_state]))
        obs = np.zeros(self.obs_dim)
        for emit, state in zip(self.emissions, self.states):
            obs += emit[state]
        if self.noise_sigma > 0.0:
            obs = obs + self._rng.normal(scale=self.noise_sigma, size=self.obs_dim)
        truth = {"top": active, "states": tuple(self.states), "active_state": self.states[active]}
        return EnvStep(observation=obs, ground_truth=truth)


class Gridworld:
    """Raster gridworld with a fixed, visually indicated reward tile.

    Each cell renders as a ``cell_px`` x ``cell_px`` block. The agent block is
    drawn at intensity 1.0, the reward tile at 0.5 (the agent covers it when
    both occupy one cell). The previous action's one-hot is appended to the
    raster, so ``obs_dim = (rows*cell_px) * (cols*cell_px) + 4``. Stepping
    onto the reward tile yields the configured reward and teleports the agent
    to a random cell without reward, flagged via ``reset_flag``.

    Actions are one-hot over (up, down, left, right). ``None`` or an all-zero
    vector holds still. Moving into a wall leaves the position unchanged.
    """

    ACTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))

    def __init__(
        self,
        *,
        rows: int = 5,
        cols: int = 5,
        cell_px: int = 3,
        reward_cell: tuple[int, int] = (4, 4),
        reward: float = 100.0,
        seed: int | None = None,
    ) -> None:
        if rows < 2 or cols < 2:
            raise ValueError(f"grid must be at least 2x2, got {rows}x{cols}")
        self.rows, self.cols, self.cell_px = rows, cols, cell_px
        rr, rc = reward_cell
        if not (0 <= rr < rows and 0 <= rc < cols):
            raise ValueError(f"reward_cell {reward_cell} outside the {rows}x{cols} grid")
        self.reward_cell = (int(rr), int(rc))
        self.reward_value = float(reward)
        self._rng = np.random.default_rng(seed)
        self.agent = self._random_free_cell()
        self._last_action = np.zeros(4)
        self.obs_dim = rows * cell_px * cols * cell_px + 4
        self.action_dim = 4

    def _random_free_cell(self) -> tuple[int, int]:
        while True:
            cell = (
                int(self._rng.integers(0, self.rows)),
                int(self._rng.integers(0, self.cols)),
            )
            if cell != self.reward_cell:
                return cell

    def _render(self) -> np.ndarray:
        px = self.cell_px
        img = np.zeros((self.rows * px, self.cols * px))
        rr, rc = self.reward_cell
        img[rr * px : (rr + 1) * px, rc * px : (rc + 1) * px] = 0.5
        ar, ac = self.agent
        img[ar * px : (ar + 1) * px, ac * px : (ac + 1) * px] = 1.0
        return np.concatenate([img.ravel(), self._last_action])

    def step(self, action: np.ndarray | None = None) -> EnvStep:
        move = (0, 0)
        act_vec = np.zeros(4)
        if action is not None:
            action = np.asarray(action, dtype=float)
            if action.shape != (4,):
                raise ValueError(f"action must have shape (4,), got {action.shape}")
            if action.any():
                idx = int(np.argmax(action))
                move = self.ACTIONS[idx]
                act_vec[idx] = 1.0
        nr = self.agent[0] + move[0]
        nc = self.agent[1] + move[1]
        if 0 <= nr < self.rows and 0 <= nc < self.cols:
            self.agent = (nr, nc)
        reward = 0.0
        reset = False
        if self.agent == self.reward_cell:
            reward = self.reward_value
            self.agent = self._random_free_cell()
            reset = True
        self._last_action = act_vec
        return EnvStep(
            observation=self._render(),
            reward=reward,
            reset_flag=reset,
            ground_truth={"agent": self.agent, "reward_cell": self.reward_cell},
        )


class TwoObjectWorld:
    """A ball and a paddle rendered additively on one small raster.

    The ball bounces around columns ``0..width-2``; the paddle is a bar of
    ``paddle_px`` pixels confined to the last column. A scripted controller
    decides once per rightward traversal whether to track (probability
    ``track_prob``): a tracked paddle moves to cover the ball's computed
    impact row, an untracked one heads for a decoy row that can never cover
    it. Collisions are counted at the frame the ball reaches the column next
    to the paddle.
    """

    def __init__(
        self,
        *,
        height: int = 8,
        width: int = 8,
        paddle_px: int = 3,
        track_prob: float = 0.9,
        seed: int | None = None,
    ) -> None:
        if height < paddle_px + 2 or width < 4:
            raise ValueError(f"world {height}x{width} too small for a {paddle_px}px paddle")
        self.height, self.width, self.paddle_px = height, width, paddle_px
        self.track_prob = float(track_prob)
        self._rng = np.random.default_rng(seed)
        self.obs_dim = height * width
        self.ball = [int(self._rng.integers(0, height)), 0]
        self.vel = [1 if self._rng.random() < 0.5 else -1, 1]
        self.paddle = int(self._rng.integers(0, height - paddle_px + 1))
        self.collisions = 0
        self.traversals = 0
        self._ball_seen = np.zeros((height, width), dtype=bool)
        self._paddle_seen = np.zeros((height, width), dtype=bool)
        self._plan_leg()

    @property
    def _ball_max_col(self) -> int:
        return self.width - 2

    def _impact_row(self) -> int:
        r, c = self.ball
        vr = self.vel[0]
        while c < self._ball_max_col:
            r += vr
            c += 1
            if r < 0:
                r = -r
                vr = -vr
            elif r >= self.height:
                r = 2 * (self.height - 1) - r
                vr = -vr
        return r

    def _plan_leg(self) -> None:
        """Pick the paddle's target row for the current rightward leg."""
        impact = self._impact_row()
        covering = int(np.clip(impact - 1, 0, self.height - self.paddle_px))
        self._tracked = bool(self._rng.random() < self.track_prob)
        if self._tracked:
            self._paddle_target = covering
        else:
            span = self.height - self.paddle_px + 1
            self._paddle_target = (covering + self.paddle_px) % span

    def object_masks(self) -> tuple[np.ndarray, np.ndarray]:
        """Boolean pixel masks (flattened) of cells each object has occupied.

        A constant-velocity ball preserves the parity of row+column between
        wall bounces, so it typically visits only half the board; the masks
        therefore accumulate actual occupancy rather than assuming whole
        columns.
        """
        return self._ball_seen.ravel().copy(), self._paddle_seen.ravel().copy()

    def _render(self) -> np.ndarray:
        img = np.zeros((self.height, self.width))
        img[self.ball[0], self.ball[1]] += 1.0
        img[self.paddle : self.paddle + self.paddle_px, self.width - 1] += 1.0
        self._ball_seen[self.ball[0], self.ball[1]] = True
        self._paddle_seen[self.paddle : self.paddle + self.paddle_px, self.width - 1] = True
        return np.clip(img, 0.0, 1.0).ravel()

    def step(self, action: np.ndarray | None = None) -> EnvStep:
        obs = self._render()
        truth = {
            "ball": tuple(self.ball),
            "paddle": self.paddle,
            "tracked": self._tracked,
        }
        # Score the leg while the ball sits next to the paddle column.
        if self.ball[1] == self._ball_max_col and self.vel[1] > 0:
            self.traversals += 1
            if self.paddle <= self.ball[0] < self.paddle + self.paddle_px:
                self.collisions += 1
        # Advance the ball with wall reflections.
        self.ball[0] += self.vel[0]
        self.ball[1] += self.vel[1]
        if self.ball[0] < 0:
            self.ball[0] = -self.ball[0]
            self.vel[0] = -self.vel[0]
        elif self.ball[0] >= self.height:
            self.ball[0] = 2 * (self.height - 1) - self.ball[0]
            self.vel[0] = -self.vel[0]
        if self.ball[1] > self._ball_max_col:
            self.ball[1] = 2 * self._ball_max_col - self.ball[1]
            self.vel[1] = -self.vel[1]
        elif self.ball[1] < 0:
            self.ball[1] = -self.ball[1]
            self.vel[1] = -self.vel[1]
            self._plan_leg()
        # Move the paddle one row toward its current target.
        if self.paddle != self._paddle_target:
            self.paddle += 1 if self._paddle_target > self.paddle else -1
        return EnvStep(observation=obs, ground_truth=truth)


class AdditiveSources:
    """Independent one-hot sources in disjoint pixel blocks, summed.

    Each source owns ``block`` consecutive pixels and lights exactly one of
    them at its gain (1.0 unless set). Positions evolve independently:
    ``walk`` reflects a +-1 random walk (smooth trajectories), ``cycle``
    advances deterministically with the source's period, ``jump`` resamples
    uniformly every step.
    """

    def __init__(
        self,
        *,
        n_sources: int = 6,
        block: int = 4,
        mode: str = "walk",
        periods: Sequence[int] | None = None,
        gains: Sequence[float] | None = None,
        seed: int | None = None,
    ) -> None:
        if mode not in ("walk", "cycle", "jump"):
            raise ValueError(f"unknown source mode {mode!r}; pick walk, cycle, or jump")
        if n_sources < 1 or block < 2:
            raise ValueError(f"need n_sources >= 1 and block >= 2, got {n_sources}, {block}")
        self.n_sources, self.block, self.mode = n_sources, block, mode
        if periods is None:
            periods = [(i % (block - 1)) + 2 for i in range(n_sources)]
        if len(periods) != n_sources or any(p < 1 for p in periods):
            raise ValueError(f"periods must list {n_sources} values >= 1")
        self.periods = list(periods)
        if gains is None:
            gains = [1.0] * n_sources
        if len(gains) != n_sources or any(g <= 0 for g in gains):
            raise ValueError(f"gains must list {n_sources} positive values")
        self.gains = [float(g) for g in gains]
        self._rng = np.random.default_rng(seed)
        self.obs_dim = n_sources * block
        self.positions = [int(self._rng.integers(0, block)) for _ in range(n_sources)]
        self._dirs = [1 if self._rng.random() < 0.5 else -1 for _ in range(n_sources)]
        self._t = 0

    def source_masks(self) -> list[np.ndarray]:
        masks = []
        for s in range(self.n_sources):
            m = np.zeros(self.obs_dim, dtype=bool)
            m[s * self.block : (s + 1) * self.block] = True
            masks.append(m)
        return masks

    def step(self, action: np.ndarray | None = None) -> EnvStep:
        obs = np.zeros(self.obs_dim)
        for s, pos in enumerate(self.positions):
            obs[s * self.block + pos] = self.gains[s]
        truth = {"positions": tuple(self.positions)}
        self._t += 1
        for s in range(self.n_sources):
            if self.mode == "walk":
                nxt = self.positions[s] + self._dirs[s]
                if not (0 <= nxt < self.block):
                    self._dirs[s] = -self._dirs[s]
                    nxt = self.positions[s] + self._dirs[s]
                self.positions[s] = nxt
            elif self.mode == "cycle":
                if self._t % self.periods[s] == 0:
                    self.positions[s] = (self.positions[s] + 1) % self.block
            else:
                self.positions[s] = int(self._rng.integers(0, self.block))
        return EnvStep(observation=obs, ground_truth=truth)


class StreamSource:
    """Observations read row by row from a CSV file.

    Every row must parse to the same number of floats. A malformed row stops
    the stream with an error naming the 1-based line. Iteration ends at EOF.
    """

    def __init__(self, path: str) -> None:
        self.path = path
        self._rows: list[np.ndarray] = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                try:
                    values = np.array([float(v) for v in row])
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from None
                if self._rows and values.size != self._rows[0].size:
                    raise ValueError(
                        f"{path}:{lineno}: row has {values.size} columns, "
                        f"expected {self._rows[0].size}"
                    )
                self._rows.append(values)
        if not self._rows:
            raise ValueError(f"{path}: no data rows")
        self.obs_dim = self._rows[0].size
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._rows)

    def exhausted(self) -> bool:
        return self._cursor >= len(self._rows)

    def step(self, action: np.ndarray | None = None) -> EnvStep:
        if self.exhausted():
            raise StopIteration(f"{self.path}: stream exhausted after {len(self._rows)} rows")
        obs = self._rows[self._cursor]
        self._cursor += 1
        return EnvStep(observation=obs.copy(), ground_truth={"row": self._cursor - 1})


_KINDS = {
    "hhmm": HhmmGenerator,
    "gridworld": Gridworld,
    "two_object": TwoObjectWorld,
    "additive": AdditiveSources,
    "stream": StreamSource,
}


def build_environment(spec: dict, seed: int | None = None):
    """Instantiate an environment from a config mapping.

    ``spec`` must carry a ``kind`` key naming one of: hhmm, gridworld,
    two_object, additive, stream. Remaining keys are passed to the
    constructor; ``seed`` is injected unless the spec pins its own.
    """
    if "kind" not in spec:
        raise ValueError("environment spec needs a 'kind' key")
    kind = spec["kind"]
    if kind not in _KINDS:
        raise ValueError(f"unknown environment kind {kind!r}; known: {sorted(_KINDS)}")
    kwargs = {k: v for k, v in spec.items() if k != "kind"}
    cls = _KINDS[kind]
    if kind == "stream":
        if "path" not in kwargs:
            raise ValueError("stream environment needs a 'path' key")
        return cls(kwargs.pop("path"), **kwargs)
    if kind == "hhmm":
        if "top_transitions" not in kwargs or "chains" not in kwargs:
            raise ValueError("hhmm environment needs 'top_transitions' and 'chains'")
        top = kwargs.pop("top_transitions")
        chains = kwargs.pop("chains")
        return cls(top, chains, seed=kwargs.pop("seed", seed), **kwargs)
    if "reward_cell" in kwargs:
        kwargs["reward_cell"] = tuple(kwargs["reward_cell"])
    return cls(seed=kwargs.pop("seed", seed), **kwargs)
