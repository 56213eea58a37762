"""A single expert: clustering, sequence inference, and goal arbitration.

The expert wires a spatial pooler and a temporal pooler together and runs on
the event principle: the temporal side only advances when the winning cluster
changes.  Between events every output is held bit-identical, rewards
accumulate, and only the clustering buffer keeps learning.

Each step emits three messages: ``y`` (the output projection sent upward),
``co`` (the context message: current code plus next-event prediction,
delivered to children one tick later), and ``go`` (the goal message: expected
reward per cluster, or a committed one-hot pick for acting experts).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .spatial import SpatialPooler, reconstruction_error
from .temporal import TemporalPooler, entropy_bits

THETA_KINDS = ("identity", "greedy", "epsilon_greedy", "sample", "epsilon_sample")

SCORE_FLOOR = 1e-12


def apply_theta(values: np.ndarray, kind: str, epsilon: float,
                rng: np.random.Generator) -> tuple[np.ndarray, int | None]:
    """Turn a preference vector into a goal message.

    ``identity`` forwards the values untouched; the pick is only considered
    active when the maximum is positive and unique.  The other kinds treat
    ``values`` as a distribution over clusters and commit to a one-hot pick.
    """
    if kind == "identity":
        mx = float(values.max()) if values.size else 0.0
        if mx > 0 and int((values == mx).sum()) == 1:
            return values, int(np.argmax(values))
        return values, None
    n = values.size
    if kind == "greedy":
        k = int(np.argmax(values))
    elif kind == "epsilon_greedy":
        k = int(rng.integers(n)) if rng.random() < epsilon else int(np.argmax(values))
    elif kind == "sample":
        k = int(rng.choice(n, p=values))
    elif kind == "epsilon_sample":
        k = int(rng.integers(n)) if rng.random() < epsilon else int(rng.choice(n, p=values))
    else:
        raise ValueError(f"unknown theta kind: {kind!r}")
    out = np.zeros(n)
    out[k] = 1.0
    return out, k


@dataclass(frozen=True)
class MetricsRow:
    fired: bool
    reco_error: float
    pred_error_hidden: float
    pred_error_obs: float
    reward_accum: float
    selected_provider: int
    entropy: float


@dataclass(frozen=True)
class StepResult:
    y: np.ndarray
    co: np.ndarray
    go: np.ndarray
    action: np.ndarray | None
    fired: bool
    metrics: MetricsRow


class Expert:
    """One node of the hierarchy.

    Parameters beyond the pooler passthroughs:

    learn_interval:
        Run one clustering update (and an idle-boost check) every this many
        scheduler steps while learning is enabled.
    theta:
        Goal message operator, one of ``identity``, ``greedy``,
        ``epsilon_greedy``, ``sample``, ``epsilon_sample``.  Identity keeps
        the expert passive (it forwards expected rewards); the rest commit to
        a one-hot pick and make the expert acting.
    theta_frozen, theta_frozen_epsilon:
        Optional replacement operator (and epsilon) installed by
        ``freeze_learning()``, so an agent can learn under a broad stochastic
        policy and then execute its learned preferences sharply.
    epsilon_explore:
        Probability per event of exploring instead of exploiting.  An acting
        expert emits a uniformly random one-hot on its action slice (motor
        babble) and commits to no target, so the influence bookkeeping is not
        charged for the event; a passive expert sends a random one-hot goal.
        Forced to zero by ``freeze_learning()``.
    discount:
        Per-lookahead-step discount applied to promised rewards.
    reward_rate:
        EMA rate of the per-sequence delayed-reward table.
    provider_sizes:
        Context vector lengths, one per provider (a provider's context is its
        cluster code concatenated with its next-event prediction, so goal
        vectors from that provider have half this length).
    action_slice:
        (start, stop) range of the observation that holds the action channel;
        setting it makes this expert emit actions at events.
    """

    def __init__(self, name: str, n_clusters: int, obs_dim: int, *,
                 t_h: int = 1, t_f: int = 1, capacity: int = 512,
                 epsilon: float = 0.01, epsilon_c: float = 0.01,
                 prior_decay: float = 0.999, learning_rate: float = 0.1,
                 buffer_size: int = 256, boost_threshold: int = 100,
                 boost_step: float = 0.1, learn_interval: int = 1,
                 theta: str = "identity", theta_epsilon: float = 0.1,
                 theta_frozen: str | None = None,
                 theta_frozen_epsilon: float | None = None,
                 epsilon_explore: float = 0.05, discount: float = 0.9,
                 reward_rate: float = 0.1,
                 provider_sizes: tuple[int, ...] = (),
                 action_slice: tuple[int, int] | None = None,
                 usage_history_cap: int = 10000, rng=None):
        if theta not in THETA_KINDS:
            raise ValueError(f"unknown theta kind: {theta!r}")
        if theta_frozen is not None and theta_frozen not in THETA_KINDS:
            raise ValueError(f"unknown frozen theta kind: {theta_frozen!r}")
        self.name = name
        self.n_clusters = int(n_clusters)
        self.obs_dim = int(obs_dim)
        self.theta = theta
        self.theta_epsilon = float(theta_epsilon)
        self.theta_frozen = theta_frozen
        self.theta_frozen_epsilon = (
            None if theta_frozen_epsilon is None else float(theta_frozen_epsilon))
        self.epsilon_explore = float(epsilon_explore)
        self.discount = float(discount)
        self.reward_rate = float(reward_rate)
        self.learn_interval = int(learn_interval)
        self.provider_sizes = tuple(int(s) for s in provider_sizes)
        self.action_slice = None if action_slice is None else (
            int(action_slice[0]), int(action_slice[1]))
        self.learning_enabled = True
        self._rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

        self.sp = SpatialPooler(
            n_clusters, obs_dim, learning_rate=learning_rate,
            buffer_size=buffer_size, boost_threshold=boost_threshold,
            boost_step=boost_step, rng=self._rng)
        self.tp = TemporalPooler(
            n_clusters, t_h=t_h, t_f=t_f, capacity=capacity, epsilon=epsilon,
            epsilon_c=epsilon_c, prior_decay=prior_decay,
            provider_sizes=provider_sizes)
        self.t_h = self.tp.t_h
        self.t_f = self.tp.t_f

        self._s_r = np.zeros((capacity, self.t_f))
        self._infl_succ = np.zeros((capacity, self.t_f))
        self._infl_att = np.zeros((capacity, self.t_f))
        for table in (self._s_r, self._infl_succ, self._infl_att):
            self.tp.attach_row_table(table)

        self._steps = 0
        self._last_buffered: np.ndarray | None = None
        self._prev_winner: int | None = None
        self._prediction = np.full(self.n_clusters, 1.0 / self.n_clusters)
        self._posterior = np.zeros(0)
        self._p_a = np.zeros(0)
        self._y = np.zeros(self.n_clusters)
        self._co = np.zeros(2 * self.n_clusters)
        self._go = np.zeros(self.n_clusters)
        self._go_target: int | None = None
        self._babble: np.ndarray | None = None
        self._action: np.ndarray | None = None
        self._last_goals: tuple | None = None
        self._reward_accum = 0.0
        self._event_rewards: deque[float] = deque(maxlen=self.t_f)
        self._pred_err_hidden = 0.0
        self._pred_err_obs = 0.0
        self._selected_provider = -1
        self._entropy = 0.0
        self._winner_hist: deque[int] = deque(maxlen=usage_history_cap)

    # -- introspection -------------------------------------------------------

    @property
    def co_dim(self) -> int:
        return 2 * self.n_clusters

    @property
    def posterior(self) -> np.ndarray:
        return self._posterior

    @property
    def last_action_preference(self) -> np.ndarray:
        return self._p_a

    @property
    def reward_table(self) -> np.ndarray:
        return self._s_r

    @property
    def influence_table(self) -> tuple[np.ndarray, np.ndarray]:
        return self._infl_succ, self._infl_att

    # -- control -------------------------------------------------------------

    def freeze_learning(self) -> None:
        """Stop all weight updates and exploration; inference keeps running.

        If a frozen-phase goal operator was configured, it replaces the
        learning-phase one here (learn under a stochastic policy, then
        execute the learned preferences more sharply)."""
        self.learning_enabled = False
        self.epsilon_explore = 0.0
        if self.theta_frozen is not None:
            self.theta = self.theta_frozen
            if self.theta_frozen_epsilon is not None:
                self.theta_epsilon = self.theta_frozen_epsilon

    # -- main loop -----------------------------------------------------------

    def step(self, obs: np.ndarray, ctx: tuple[np.ndarray, ...] = (),
             goals: tuple | None = None, reward: float = 0.0) -> StepResult:
        """Advance one scheduler step; returns held outputs on non-events."""
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (self.obs_dim,):
            raise ValueError(f"observation has shape {obs.shape}, "
                             f"expected ({self.obs_dim},)")
        self._steps += 1
        self._reward_accum += reward
        if self.learning_enabled:
            # a repeat of the last buffered input carries no new information
            # for clustering and would skew the buffer toward dwell states
            if self._last_buffered is None or not np.array_equal(obs, self._last_buffered):
                self.sp.observe(obs)
                self._last_buffered = obs.copy()
            if self._steps % self.learn_interval == 0:
                self.sp.refresh()
        x = self.sp.classify(obs)
        w = int(np.argmax(x))
        self._winner_hist.append(w)
        reco = reconstruction_error(obs, self.sp.centers[w])
        fired = w != self._prev_winner
        if fired:
            consumed = self._handle_event(x, w, obs, ctx, goals)
            reward_metric = consumed
        else:
            reward_metric = self._reward_accum
        self._prev_winner = w
        metrics = MetricsRow(
            fired=fired, reco_error=reco,
            pred_error_hidden=self._pred_err_hidden,
            pred_error_obs=self._pred_err_obs,
            reward_accum=reward_metric,
            selected_provider=self._selected_provider,
            entropy=self._entropy)
        return StepResult(y=self._y, co=self._co, go=self._go,
                          action=self._action if fired else None,
                          fired=fired, metrics=metrics)

    def _handle_event(self, x: np.ndarray, w: int, obs: np.ndarray,
                      ctx: tuple, goals: tuple | None) -> float:
        greedy_prev = int(np.argmax(self._prediction))
        self._pred_err_hidden = 0.0 if greedy_prev == w else 2.0
        self._pred_err_obs = reconstruction_error(obs, self.sp.centers[greedy_prev])

        if self.learning_enabled:
            self._update_influence(w)
        row = self.tp.observe_event(x, ctx=ctx, learn=self.learning_enabled)

        consumed = self._reward_accum
        self._reward_accum = 0.0
        self._event_rewards.append(consumed)
        if (self.learning_enabled and row is not None
                and len(self._event_rewards) == self.t_f):
            for f in range(self.t_f):
                r = self._event_rewards[f]
                self._s_r[row, f] += self.reward_rate * (r - self._s_r[row, f])

        match = self.tp.match_values()
        n_prov = len(self.provider_sizes)
        if match.size and n_prov:
            pcs = [self.tp.context_likelihood(p) for p in range(n_prov)]
            # a single provider always wins its own comparison
            sel = 0 if n_prov == 1 else self.tp.select_context(match, pcs)
            post = self.tp.posterior_probs(match, pcs[sel])
        else:
            sel = -1
            post = self.tp.posterior_probs(match)
        self._selected_provider = sel
        self._posterior = post
        self._prediction = self.tp.predict_next(post)
        self._entropy = entropy_bits(post)

        y = x + self.tp.cluster_evidence(match)
        self._y = y / y.sum()
        self._co = np.concatenate([x, self._prediction])

        self._last_goals = goals
        score, e_r = self._goal_scores(post, goals)
        self._go, self._go_target = self._select_go(post, score, e_r)
        if self.action_slice is None:
            self._action = None
        elif self._babble is not None:
            self._action = self._babble
        elif self._go_target is not None:
            lo, hi = self.action_slice
            self._action = self.sp.centers[self._go_target, lo:hi].copy()
        else:
            self._action = None
        return consumed

    # -- goal machinery --------------------------------------------------------

    def _update_influence(self, w: int) -> None:
        """Score the previous event's committed pick against what happened.

        For each lookahead depth, sequences whose prefix matches the realized
        event window and whose next element equals the commanded target get
        one attempt, successful if the winner actually is that target.
        """
        g = self._go_target
        n = self.tp.n_seqs
        if g is None or n == 0:
            return
        hist = self.tp.history()
        seqs = self.tp.windows_view()
        for f in range(1, self.t_f + 1):
            need = self.t_h + f
            if len(hist) < need:
                continue
            tail = np.asarray(hist[-need:])
            mask = (seqs[:, :need] == tail).all(axis=1) & (seqs[:, need] == g)
            if not mask.any():
                continue
            self._infl_att[:n][mask, f - 1] += 1.0
            if w == g:
                self._infl_succ[:n][mask, f - 1] += 1.0

    def _goal_scores(self, post: np.ndarray,
                     goals: tuple | None) -> tuple[np.ndarray | None, np.ndarray]:
        """Per-sequence achievable value and per-cluster expected reward.

        value(s) = max over lookahead f of
            (promised external goal payoff + learned delayed reward)
            * chained influence probability * discount^f
        """
        n = self.tp.n_seqs
        K = self.n_clusters
        if n == 0:
            return None, np.zeros(K)
        base = self._s_r[:n]
        promised = base
        if goals is not None:
            for p, g in enumerate(goals):
                if g is None:
                    continue
                g = np.asarray(g, dtype=float)
                half = self.provider_sizes[p] // 2
                if g.shape != (half,):
                    raise ValueError(
                        f"goal {p} has shape {g.shape}, expected ({half},)")
                if not g.any():
                    continue
                if promised is base:
                    promised = base.copy()
                for f in range(1, self.t_f + 1):
                    promised[:, f - 1] += self.tp.future_payoff(p, self.t_h + f, g)
        infl = (self._infl_succ[:n] + 1.0) / (self._infl_att[:n] + 2.0)
        chain = np.cumprod(infl, axis=1)
        disc = self.discount ** np.arange(1, self.t_f + 1)
        score = (promised * chain * disc).max(axis=1)
        e_r = np.bincount(self.tp.next_elements(), weights=post * score, minlength=K)
        return score, e_r

    def goal_scores(self) -> tuple[np.ndarray | None, np.ndarray]:
        """Recompute sequence values and expected rewards for the state left
        by the most recent event."""
        return self._goal_scores(self._posterior, self._last_goals)

    def _select_go(self, post: np.ndarray, score: np.ndarray | None,
                   e_r: np.ndarray) -> tuple[np.ndarray, int | None]:
        self._babble = None
        if self._rng.random() < self.epsilon_explore:
            if self.action_slice is not None:
                lo, hi = self.action_slice
                babble = np.zeros(hi - lo)
                babble[int(self._rng.integers(hi - lo))] = 1.0
                self._babble = babble
                return np.zeros(self.n_clusters), None
            k = int(self._rng.integers(self.n_clusters))
            out = np.zeros(self.n_clusters)
            out[k] = 1.0
            return out, k
        if self.theta == "identity":
            return apply_theta(e_r, "identity", self.theta_epsilon, self._rng)
        if score is None:
            self._p_a = np.zeros(0)
            prefs = self.tp.predict_next(np.zeros(0))
        else:
            if float(score.max()) <= 0.0:
                p_a = post
            else:
                p_a = post * np.maximum(score, SCORE_FLOOR)
                p_a = p_a / p_a.sum()
            self._p_a = p_a
            total = float(e_r.sum())
            if total > 0.0:
                # rank successors by expected reward; with no reward in
                # sight anywhere, fall back to following the expected course
                prefs = e_r / total
            else:
                prefs = self.tp.predict_next(p_a)
        return apply_theta(prefs, self.theta, self.theta_epsilon, self._rng)

    def emit_action(self, go: np.ndarray) -> np.ndarray:
        """Project a one-hot goal pick to the action channel of the
        observation space."""
        if self.action_slice is None:
            raise RuntimeError("expert has no action slice")
        vec = self.sp.reconstruct(go)
        lo, hi = self.action_slice
        return vec[lo:hi]

    # -- export ------------------------------------------------------------

    def usage_csv(self, window: int = 200) -> str:
        """Moving-average cluster usage over the recorded winner history."""
        hist = list(self._winner_hist)
        K = self.n_clusters
        lines = ["step," + ",".join(f"c{k}" for k in range(K))]
        if hist:
            onehot = np.zeros((len(hist), K))
            onehot[np.arange(len(hist)), hist] = 1.0
            cs = np.cumsum(onehot, axis=0)
            start = self._steps - len(hist)
            for i in range(len(hist)):
                lo = max(0, i + 1 - window)
                tot = cs[i] - (cs[lo - 1] if lo > 0 else 0.0)
                avg = tot / (i + 1 - lo)
                lines.append(f"{start + i + 1}," + ",".join(repr(float(v)) for v in avg))
        return "\n".join(lines) + "\n"
