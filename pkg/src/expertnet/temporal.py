"""Fixed-length sequence library with probabilistic matching.

Events (cluster switches) slide a window of length ``m = t_h + 1 + t_f`` over
the event stream.  Every completed window is stored, or re-counted if already
known, in a bounded library.  Inference asks: given the recent lookbehind
events, which stored window are we inside, and what comes next?

Matching is deliberately soft: each lookbehind position contributes a factor
of ``1 - epsilon`` on agreement and ``epsilon`` on disagreement, so no stored
sequence ever reaches exactly zero probability.  Context vectors supplied by
other experts are folded in through per-position soft counts.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def entropy_bits(p: np.ndarray) -> float:
    """Shannon entropy of a distribution in bits; zero for empty input."""
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    if p.size == 0:
        return 0.0
    return float(-(p * np.log2(p)).sum())


class TemporalPooler:
    """Bounded library of fixed-length event windows.

    Parameters
    ----------
    n_clusters:
        Alphabet size (K); events are one-hot codes of this length.
    t_h:
        Lookbehind horizon: the window covers the current event plus ``t_h``
        events of history before it.
    t_f:
        Lookahead horizon beyond the current event.
    capacity:
        Maximum number of stored windows.  When full, the window with the
        lowest prior count is evicted (ties: the oldest insertion).
    epsilon:
        Per-position mismatch probability used by the match indicators.
    epsilon_c:
        Clamp applied to per-position context agreement factors.
    prior_decay:
        Multiplicative decay applied to every stored count when a new window
        completes, before the observed window's count is incremented.
    provider_sizes:
        Lengths of the context vectors delivered alongside each event, one
        entry per provider.
    """

    def __init__(self, n_clusters: int, *, t_h: int = 1, t_f: int = 1,
                 capacity: int = 512, epsilon: float = 0.01,
                 epsilon_c: float = 0.01, prior_decay: float = 0.999,
                 provider_sizes: tuple[int, ...] = ()):
        if t_h < 0 or t_f < 1:
            raise ValueError("need t_h >= 0 and t_f >= 1")
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.n_clusters = int(n_clusters)
        self.t_h = int(t_h)
        self.t_f = int(t_f)
        self.m = self.t_h + 1 + self.t_f
        self.capacity = int(capacity)
        self.epsilon = float(epsilon)
        self.epsilon_c = float(epsilon_c)
        self.prior_decay = float(prior_decay)
        self.provider_sizes = tuple(int(s) for s in provider_sizes)

        self._seqs = np.full((self.capacity, self.m), -1, dtype=np.int64)
        self._prior = np.zeros(self.capacity)
        self._birth = np.zeros(self.capacity, dtype=np.int64)
        self._births = 0
        self._n = 0
        self._index: dict[tuple[int, ...], int] = {}
        self._sc_succ = [np.ones((self.capacity, self.m, s)) for s in self.provider_sizes]
        # running sums of _sc_succ over the context axis, kept in step so the
        # likelihood path never has to materialize a normalized copy
        self._sc_rowsum = [np.full((self.capacity, self.m), float(s))
                           for s in self.provider_sizes]
        self._sc_tot = np.full((self.capacity, self.m), 2.0)
        self._row_tables: list[np.ndarray] = []
        self._hist: deque[int] = deque(maxlen=self.m)
        self._ctx_hist: deque[tuple[np.ndarray, ...]] = deque(maxlen=self.m)

    # -- bookkeeping ---------------------------------------------------------

    @property
    def n_seqs(self) -> int:
        return self._n

    def sequences(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in self._seqs[i]) for i in range(self._n)]

    def priors(self) -> np.ndarray:
        """Normalized prior weights of the stored windows, in row order."""
        if self._n == 0:
            return np.zeros(0)
        p = self._prior[: self._n]
        return p / p.sum()

    def row_of(self, window: tuple[int, ...]) -> int:
        return self._index[tuple(window)]

    def next_elements(self) -> np.ndarray:
        """The first lookahead element of every stored window."""
        return self._seqs[: self._n, self.t_h + 1]

    def windows_view(self) -> np.ndarray:
        """Read-only view of the stored windows, shape (n_seqs, m)."""
        return self._seqs[: self._n]

    def attach_row_table(self, table: np.ndarray) -> None:
        """Register a per-row side table whose rows are zeroed on eviction."""
        if table.shape[0] != self.capacity:
            raise ValueError("row table must have one row per capacity slot")
        self._row_tables.append(table)

    def reset_history(self) -> None:
        """Forget the rolling event history (the library is untouched)."""
        self._hist.clear()
        self._ctx_hist.clear()

    def history(self) -> list[int]:
        return list(self._hist)

    # -- library updates -------------------------------------------------------

    def observe_event(self, x: np.ndarray, ctx: tuple[np.ndarray, ...] = (),
                      learn: bool = True) -> int | None:
        """Record one event (a one-hot cluster code) plus its context snapshot.

        Returns the library row of the window completed by this event, or
        None while history is still filling up.  With ``learn=False`` the
        rolling history advances but counts, context tables and eviction are
        all left untouched.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_clusters,):
            raise ValueError(f"event has shape {x.shape}, expected ({self.n_clusters},)")
        nz = np.flatnonzero(x)
        if nz.size != 1 or x[nz[0]] != 1.0:
            raise ValueError("event must be one-hot")
        k = int(nz[0])
        if self._hist and self._hist[-1] == k:
            raise ValueError("consecutive duplicate event is not an event")
        if len(ctx) != len(self.provider_sizes):
            raise ValueError(
                f"expected {len(self.provider_sizes)} context vectors, got {len(ctx)}")
        snapshot = []
        for p, vec in enumerate(ctx):
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (self.provider_sizes[p],):
                raise ValueError(
                    f"context {p} has shape {vec.shape}, "
                    f"expected ({self.provider_sizes[p]},)")
            snapshot.append(vec.copy())
        self._hist.append(k)
        self._ctx_hist.append(tuple(snapshot))
        if len(self._hist) < self.m:
            return None
        window = tuple(self._hist)
        if not learn:
            return self._index.get(window)
        self._prior[: self._n] *= self.prior_decay
        row = self._index.get(window)
        if row is None:
            row = self._insert(window)
        self._prior[row] += 1.0
        for p in range(len(self.provider_sizes)):
            succ = self._sc_succ[p]
            rowsum = self._sc_rowsum[p]
            for pos in range(self.m):
                vec = self._ctx_hist[pos][p]
                succ[row, pos] += vec
                rowsum[row, pos] += float(vec.sum())
        self._sc_tot[row] += 1.0
        return row

    def _insert(self, window: tuple[int, ...]) -> int:
        if self._n < self.capacity:
            row = self._n
            self._n += 1
        else:
            active = np.arange(self._n)
            order = np.lexsort((self._birth[: self._n], self._prior[: self._n]))
            row = int(active[order[0]])
            old = tuple(int(v) for v in self._seqs[row])
            del self._index[old]
            self._prior[row] = 0.0
            for p, succ in enumerate(self._sc_succ):
                succ[row] = 1.0
                self._sc_rowsum[p][row] = float(self.provider_sizes[p])
            self._sc_tot[row] = 2.0
            for table in self._row_tables:
                table[row] = 0
        self._seqs[row] = window
        self._births += 1
        self._birth[row] = self._births
        self._index[window] = row
        return row

    # -- matching ----------------------------------------------------------

    def match_values(self, history: list[int] | None = None) -> np.ndarray:
        """Per-row match value: normalized prior times the product of soft
        lookbehind indicators.  Unnormalized; empty library gives shape (0,).

        A history shorter than the lookbehind span contributes neutral
        factors for the missing (oldest) positions.
        """
        if self._n == 0:
            return np.zeros(0)
        h = list(self._hist) if history is None else list(history)
        h = h[-(self.t_h + 1):]
        p = self.priors()
        span = self.t_h + 1
        for j, elem in enumerate(h):
            pos = span - len(h) + j
            agree = self._seqs[: self._n, pos] == elem
            p *= np.where(agree, 1.0 - self.epsilon, self.epsilon)
        return p

    def context_likelihood(self, provider: int,
                           ctx_history: list[np.ndarray] | None = None) -> np.ndarray:
        """Per-row likelihood of the recent context under one provider.

        Each available lookbehind position contributes the dot product of the
        observed context vector with the row-normalized learned context
        profile, clamped to ``[epsilon_c, 1 - epsilon_c]``.
        """
        if self._n == 0:
            return np.zeros(0)
        if ctx_history is None:
            vecs = [entry[provider] for entry in self._ctx_hist]
        else:
            vecs = [np.asarray(v, dtype=float) for v in ctx_history]
        span = self.t_h + 1
        vecs = vecs[-span:]
        acc = np.ones(self._n)
        succ = self._sc_succ[provider]
        rowsum = self._sc_rowsum[provider]
        for j, vec in enumerate(vecs):
            pos = span - len(vecs) + j
            # row-normalizing the profile and dotting with vec reduces to a
            # single matvec over the raw counts
            f = (succ[: self._n, pos, :] @ vec) / rowsum[: self._n, pos]
            acc *= np.clip(f, self.epsilon_c, 1.0 - self.epsilon_c)
        return acc

    def select_context(self, match: np.ndarray, likelihoods: list[np.ndarray]) -> int:
        """Pick the provider whose likelihood moves the match distribution the
        most, by KL divergence.  Ties (including the all-neutral case)
        resolve to the lowest index."""
        base = match / match.sum()
        kls = np.zeros(len(likelihoods))
        for i, pc in enumerate(likelihoods):
            q = match * pc
            q = q / q.sum()
            kl = float(np.sum(base * np.log(base / q)))
            kls[i] = 0.0 if kl < 1e-12 else kl
        return int(np.argmax(kls))

    def posterior_probs(self, match: np.ndarray,
                        context: np.ndarray | None = None) -> np.ndarray:
        """Normalize match values, optionally reweighted by one provider's
        context likelihood."""
        if match.size == 0:
            return np.zeros(0)
        v = match if context is None else match * context
        return v / v.sum()

    # -- prediction ----------------------------------------------------------

    def predict_next(self, p_seq: np.ndarray) -> np.ndarray:
        """Distribution over the next event's cluster.

        Sequence mass votes for each row's first lookahead element through
        the same soft indicators used for matching, then renormalizes.  With
        no usable mass the prediction is uniform.
        """
        K = self.n_clusters
        if self._n == 0 or p_seq.size == 0 or float(p_seq.sum()) <= 0.0:
            return np.full(K, 1.0 / K)
        nxt = self._seqs[: self._n, self.t_h + 1]
        evid = (1.0 - 2.0 * self.epsilon) * np.bincount(nxt, weights=p_seq, minlength=K)
        evid += self.epsilon * float(p_seq.sum())
        return evid / evid.sum()

    def cluster_evidence(self, weights: np.ndarray) -> np.ndarray:
        """Per-cluster evidence summed over every window position, weighted by
        per-row mass: the soft count of how much active sequence mass touches
        each cluster anywhere in its window."""
        K = self.n_clusters
        if self._n == 0 or weights.size == 0:
            return np.zeros(K)
        flat = self._seqs[: self._n].ravel()
        w = np.repeat(weights, self.m)
        evid = (1.0 - 2.0 * self.epsilon) * np.bincount(flat, weights=w, minlength=K)
        evid += self.epsilon * self.m * float(weights.sum())
        return evid

    def future_likelihood(self, provider: int) -> np.ndarray:
        """Raw per-element context likelihoods ``succ / tot`` for every row
        and window position of one provider, shape (n, m, size)."""
        if self._n == 0:
            return np.zeros((0, self.m, self.provider_sizes[provider]))
        succ = self._sc_succ[provider][: self._n]
        return succ / self._sc_tot[: self._n, :, None]

    def future_payoff(self, provider: int, pos: int, target: np.ndarray) -> np.ndarray:
        """Per-row overlap of one window position's raw context likelihood
        with a target vector: ``future_likelihood(provider)[:, pos, :k] @
        target`` with k = len(target), computed without building the full
        likelihood array."""
        if self._n == 0:
            return np.zeros(0)
        target = np.asarray(target, dtype=float)
        succ = self._sc_succ[provider]
        dots = succ[: self._n, pos, : target.size] @ target
        return dots / self._sc_tot[: self._n, pos]

    # -- export ------------------------------------------------------------

    def sequence_graph_dot(self) -> str:
        """The library as a DOT digraph: one node per cluster, one edge per
        adjacent pair, weights aggregating normalized priors."""
        lines = ["digraph sequences {", "  rankdir=LR;"]
        for k in range(self.n_clusters):
            lines.append(f'  {k} [label="c{k}"];')
        edges: dict[tuple[int, int], float] = {}
        pri = self.priors()
        for i in range(self._n):
            for d in range(self.m - 1):
                key = (int(self._seqs[i, d]), int(self._seqs[i, d + 1]))
                edges[key] = edges.get(key, 0.0) + float(pri[i])
        for (a, b), w in sorted(edges.items()):
            lines.append(f'  {a} -> {b} [label="{w:.4f}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"
