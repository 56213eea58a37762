"""Online winner-take-all clustering over a bounded observation buffer.

The pooler holds K cluster centers in observation space.  Classification is a
nearest-center lookup producing a one-hot code; learning is a damped minibatch
k-means step over a ring buffer of recent observations.  Clusters that stop
winning are pulled toward the busiest region of the data so the whole
codebook stays live.
"""

from __future__ import annotations

import io

import numpy as np


def reconstruction_error(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Euclidean distance between two observation-space vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.sum((a - b) ** 2))


class SpatialPooler:
    """K-center vector quantizer with usage-based boosting.

    Parameters
    ----------
    n_clusters:
        Number of cluster centers (K).
    dim:
        Dimensionality of the observation space.
    learning_rate:
        Fraction of the distance to the assigned buffer mean covered by one
        ``learn()`` call.
    buffer_size:
        Capacity of the ring buffer fed by ``observe()``.
    boost_threshold:
        A cluster is considered idle once it has gone strictly more than this
        many classification steps without winning.
    boost_step:
        Fraction of the distance an idle center moves toward a buffered point
        of the most spread-out active cluster per ``boost_idle()`` call.
    rng:
        Seed or ``numpy.random.Generator`` for center initialization and
        boost-target sampling.
    """

    def __init__(self, n_clusters: int, dim: int, *, learning_rate: float = 0.1,
                 buffer_size: int = 256, boost_threshold: int = 100,
                 boost_step: float = 0.1, rng=None):
        if n_clusters < 1:
            raise ValueError("n_clusters must be positive")
        if dim < 1:
            raise ValueError("dim must be positive")
        self.n_clusters = int(n_clusters)
        self.dim = int(dim)
        self.learning_rate = float(learning_rate)
        self.boost_threshold = int(boost_threshold)
        self.boost_step = float(boost_step)
        self._rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.centers = self._rng.normal(0.0, 0.01, size=(self.n_clusters, self.dim))
        self.last_win_step = np.zeros(self.n_clusters, dtype=np.int64)
        self.step_count = 0
        self._buffer = np.zeros((int(buffer_size), self.dim))
        self._buf_n = 0
        self._buf_head = 0

    # -- classification ----------------------------------------------------

    def _check_obs(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (self.dim,):
            raise ValueError(
                f"observation has shape {obs.shape}, expected ({self.dim},)")
        return obs

    def winner(self, obs) -> int:
        """Index of the nearest center.  Ties resolve to the lowest index."""
        obs = self._check_obs(obs)
        dists = np.sum((self.centers - obs) ** 2, axis=1)
        return int(np.argmin(dists))

    def classify(self, obs) -> np.ndarray:
        """One-hot code of the nearest center; records the win for boosting."""
        k = self.winner(obs)
        self.step_count += 1
        self.last_win_step[k] = self.step_count
        out = np.zeros(self.n_clusters)
        out[k] = 1.0
        return out

    def reconstruct(self, x) -> np.ndarray:
        """Map a one-hot cluster code back to its center."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_clusters,):
            raise ValueError(
                f"code has shape {x.shape}, expected ({self.n_clusters},)")
        nonzero = np.flatnonzero(x)
        if nonzero.size != 1 or x[nonzero[0]] != 1.0:
            raise ValueError("reconstruct expects a one-hot code")
        return self.centers[nonzero[0]].copy()

    def center(self, k: int) -> np.ndarray:
        return self.centers[k].copy()

    # -- learning ----------------------------------------------------------

    def observe(self, obs) -> None:
        """Push an observation into the learning buffer."""
        obs = self._check_obs(obs)
        self._buffer[self._buf_head] = obs
        self._buf_head = (self._buf_head + 1) % self._buffer.shape[0]
        self._buf_n = min(self._buf_n + 1, self._buffer.shape[0])

    @property
    def buffer_fill(self) -> int:
        return self._buf_n

    def _buffer_view(self) -> np.ndarray:
        return self._buffer[: self._buf_n]

    def _assign(self, data: np.ndarray) -> np.ndarray:
        # ||d - c||^2 = ||d||^2 - 2 d.c + ||c||^2; the ||d||^2 term is
        # constant along the argmin axis, so it can be dropped.
        cross = data @ self.centers.T
        center_norms = np.einsum("kd,kd->k", self.centers, self.centers)
        return np.argmin(center_norms[None, :] - 2.0 * cross, axis=1)

    def learn(self) -> None:
        """One damped k-means step: move each center toward the mean of the
        buffered points currently assigned to it."""
        if self._buf_n == 0:
            raise RuntimeError("learning buffer is empty")
        data = self._buffer_view()
        self._learn_from(data, self._assign(data))

    def refresh(self) -> None:
        """One learning round: a k-means step plus idle boosting, sharing a
        single assignment pass.  Equivalent to ``learn()`` followed by
        ``boost_idle()`` except that boosting ranks clusters under the
        pre-step assignment, which costs half the distance computations."""
        if self._buf_n == 0:
            raise RuntimeError("learning buffer is empty")
        data = self._buffer_view()
        assign = self._assign(data)
        self._learn_from(data, assign)
        self._boost_from(data, assign)

    def _learn_from(self, data: np.ndarray, assign: np.ndarray) -> None:
        for k in np.unique(assign):
            mean = data[assign == k].mean(axis=0)
            self.centers[k] += self.learning_rate * (mean - self.centers[k])

    def boost_idle(self) -> None:
        """Pull long-idle centers toward the most spread-out cluster.

        Spread is the trace of the per-cluster covariance of assigned buffer
        points; clusters with fewer than two points are not candidates.  Each
        idle center moves toward its own point sampled from the winning
        cluster's buffered data, so several idle centers land on different
        targets instead of collapsing onto one spot.  A no-op when nothing is
        idle or no candidate exists.
        """
        if self._buf_n == 0:
            return
        idle = (self.step_count - self.last_win_step) > self.boost_threshold
        if not idle.any():
            return
        data = self._buffer_view()
        self._boost_from(data, self._assign(data))

    def _boost_from(self, data: np.ndarray, assign: np.ndarray) -> None:
        idle = (self.step_count - self.last_win_step) > self.boost_threshold
        if not idle.any():
            return
        onehot = np.zeros((data.shape[0], self.n_clusters))
        onehot[np.arange(data.shape[0]), assign] = 1.0
        counts = onehot.sum(axis=0)
        sums = onehot.T @ data
        sq = onehot.T @ np.einsum("nd,nd->n", data, data)
        valid = counts >= 2
        if not valid.any():
            return
        # Total variance per cluster as E[|x|^2] - |E[x]|^2, clipped so
        # cancellation error cannot produce a negative winner.
        spread = np.full(self.n_clusters, -np.inf)
        c = counts[valid]
        means = sums[valid] / c[:, None]
        spread[valid] = np.maximum(
            sq[valid] / c - np.einsum("kd,kd->k", means, means), 0.0)
        target = int(np.argmax(spread))
        pts = data[assign == target]
        draws = self._rng.integers(pts.shape[0], size=int(idle.sum()))
        self.centers[idle] += self.boost_step * (pts[draws] - self.centers[idle])

    # -- export ------------------------------------------------------------

    def centers_csv(self) -> str:
        """Cluster centers as CSV with header ``cluster_id,c0..c{D-1}``."""
        out = io.StringIO()
        cols = ",".join(f"c{d}" for d in range(self.dim))
        out.write(f"cluster_id,{cols}\n")
        for k in range(self.n_clusters):
            row = ",".join(repr(float(v)) for v in self.centers[k])
            out.write(f"{k},{row}\n")
        return out.getvalue()
