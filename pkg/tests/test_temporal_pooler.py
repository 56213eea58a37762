"""Tests of the fixed-length sequence library and its inference ops."""

from __future__ import annotations

import numpy as np
import pytest

from expertnet.temporal import TemporalPooler, entropy_bits


def make_tp(n_clusters=8, *, t_h=1, t_f=1, capacity=32, prior_decay=1.0, **kwargs):
    return TemporalPooler(n_clusters, t_h=t_h, t_f=t_f, capacity=capacity,
                          prior_decay=prior_decay, **kwargs)


def one_hot(k, n=8):
    v = np.zeros(n)
    v[k] = 1.0
    return v


def feed(tp, events, ctx=None, n=8):
    """Feed a run of events, then clear the rolling history."""
    for e in events:
        tp.observe_event(one_hot(e, n), ctx=ctx if ctx is not None else ())
    tp.reset_history()


# ---------------------------------------------------------------------------
# library building


def test_three_events_create_one_sequence():
    tp = make_tp()
    tp.observe_event(one_hot(0))
    tp.observe_event(one_hot(1))
    assert tp.n_seqs == 0
    tp.observe_event(one_hot(2))
    assert tp.n_seqs == 1
    assert tp.sequences() == [(0, 1, 2)]
    assert tp.priors() == pytest.approx([1.0])


def test_sliding_window_over_a_cycle_builds_all_rotations():
    tp = make_tp()
    # 0,1,2 repeated; after 11 events each rotation has been counted 3 times
    for e in [0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1]:
        tp.observe_event(one_hot(e))
    assert sorted(tp.sequences()) == [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    assert tp.priors() == pytest.approx([1 / 3, 1 / 3, 1 / 3])


def test_duplicate_windows_share_a_row():
    tp = make_tp()
    feed(tp, [0, 1, 2])
    feed(tp, [0, 1, 2])
    assert tp.n_seqs == 1
    assert tp.priors() == pytest.approx([1.0])


def test_consecutive_duplicate_event_is_rejected():
    tp = make_tp()
    tp.observe_event(one_hot(3))
    with pytest.raises(ValueError):
        tp.observe_event(one_hot(3))


def test_prior_decay_downweights_old_windows():
    tp = make_tp(prior_decay=0.5)
    feed(tp, [0, 1, 2])
    feed(tp, [3, 4, 5])
    # first count decayed to 0.5 before the second window added 1
    assert tp.priors() == pytest.approx([0.5 / 1.5, 1.0 / 1.5])


def test_window_length_follows_lookbehind_and_lookahead():
    tp = make_tp(t_h=2, t_f=2)
    assert tp.m == 5
    for e in [0, 1, 2, 3]:
        tp.observe_event(one_hot(e))
    assert tp.n_seqs == 0
    tp.observe_event(one_hot(4))
    assert tp.sequences() == [(0, 1, 2, 3, 4)]


# ---------------------------------------------------------------------------
# eviction


def test_eviction_drops_lowest_prior():
    tp = make_tp(capacity=2)
    feed(tp, [0, 1, 2])
    feed(tp, [0, 1, 2])
    feed(tp, [3, 4, 5])
    feed(tp, [6, 7, 0])
    assert sorted(tp.sequences()) == [(0, 1, 2), (6, 7, 0)]


def test_eviction_tie_drops_oldest():
    tp = make_tp(capacity=2)
    feed(tp, [0, 1, 2])
    feed(tp, [3, 4, 5])
    feed(tp, [6, 7, 0])
    assert sorted(tp.sequences()) == [(3, 4, 5), (6, 7, 0)]


def test_eviction_resets_attached_row_tables():
    tp = make_tp(capacity=2)
    table = np.full((2, 3), 7.0)
    tp.attach_row_table(table)
    feed(tp, [0, 1, 2])
    feed(tp, [0, 1, 2])
    feed(tp, [3, 4, 5])
    row_kept = tp.row_of((0, 1, 2))
    feed(tp, [6, 7, 0])
    row_new = tp.row_of((6, 7, 0))
    assert row_new != row_kept
    assert table[row_new].tolist() == [0.0, 0.0, 0.0]
    assert table[row_kept].tolist() == [7.0, 7.0, 7.0]


def test_capacity_is_never_exceeded():
    tp = make_tp(capacity=4)
    rng = np.random.default_rng(0)
    prev = -1
    for _ in range(200):
        e = int(rng.integers(0, 8))
        if e == prev:
            e = (e + 1) % 8
        tp.observe_event(one_hot(e))
        prev = e
    assert tp.n_seqs <= 4
    assert len(tp.sequences()) == len(set(tp.sequences()))


# ---------------------------------------------------------------------------
# sequence matching


def test_match_values_with_full_and_zero_overlap():
    tp = make_tp()
    feed(tp, [0, 1, 2])
    feed(tp, [3, 4, 5])
    p = tp.match_values(history=[0, 1])
    # equal priors 0.5; matching sequence scores (1-eps)^2, the other eps^2
    assert p == pytest.approx([0.5 * 0.99 ** 2, 0.5 * 0.01 ** 2], abs=1e-12)
    post = tp.posterior_probs(p)
    assert post == pytest.approx([0.9801 / 0.9802, 0.0001 / 0.9802], abs=1e-9)


def test_match_with_short_history_uses_neutral_factors():
    tp = make_tp()
    feed(tp, [0, 1, 2])
    feed(tp, [3, 4, 5])
    p = tp.match_values(history=[1])
    # only the latest lookbehind position is constrained
    assert p == pytest.approx([0.5 * 0.99, 0.5 * 0.01], abs=1e-12)
    assert tp.posterior_probs(p) == pytest.approx([0.99, 0.01], abs=1e-12)


def test_match_with_no_history_returns_priors():
    tp = make_tp(prior_decay=0.5)
    feed(tp, [0, 1, 2])
    feed(tp, [3, 4, 5])
    assert tp.match_values(history=[]) == pytest.approx(tp.priors())


def test_match_uses_only_the_most_recent_lookbehind_span():
    tp = make_tp()
    feed(tp, [0, 1, 2])
    feed(tp, [3, 4, 5])
    assert tp.match_values(history=[7, 6, 0, 1]) == pytest.approx(
        tp.match_values(history=[0, 1]))


def test_match_uses_internal_history_by_default():
    tp = make_tp()
    feed(tp, [0, 1, 2])
    tp.observe_event(one_hot(0))
    tp.observe_event(one_hot(1))
    assert tp.match_values() == pytest.approx(tp.match_values(history=[0, 1]))


def test_match_values_stay_strictly_positive():
    tp = make_tp()
    feed(tp, [0, 1, 2])
    feed(tp, [3, 4, 5])
    feed(tp, [2, 6, 7])
    assert (tp.match_values(history=[4, 7]) > 0).all()


def test_empty_library_has_empty_match():
    tp = make_tp()
    assert tp.match_values(history=[0, 1]).shape == (0,)


# ---------------------------------------------------------------------------
# next-event prediction


def test_predict_next_mixes_sequence_mass():
    tp = make_tp(n_clusters=4)
    for _ in range(3):
        feed(tp, [0, 1, 2], n=4)
    for _ in range(2):
        feed(tp, [0, 1, 3], n=4)
    p_seq = tp.posterior_probs(tp.match_values(history=[0, 1]))
    assert p_seq == pytest.approx([0.6, 0.4], abs=1e-12)
    pred = tp.predict_next(p_seq)
    # smoothed by the 0.01 indicator floor, renormalized over 4 clusters
    expected = np.array([0.01, 0.01, 0.598, 0.402]) / 1.02
    assert pred == pytest.approx(expected, abs=1e-9)


def test_predict_next_approaches_exact_split_as_floor_vanishes():
    tp = make_tp(n_clusters=4, epsilon=1e-9)
    for _ in range(3):
        feed(tp, [0, 1, 2], n=4)
    for _ in range(2):
        feed(tp, [0, 1, 3], n=4)
    pred = tp.predict_next(np.array([0.6, 0.4]))
    assert pred == pytest.approx([0.0, 0.0, 0.6, 0.4], abs=1e-6)


def test_predict_next_concentrates_when_all_sequences_agree():
    tp = make_tp(n_clusters=4)
    feed(tp, [0, 1, 2], n=4)
    feed(tp, [3, 1, 2], n=4)
    pred = tp.predict_next(np.array([0.5, 0.5]))
    assert int(np.argmax(pred)) == 2
    assert pred[2] > 0.95
    assert (pred > 0).all()


def test_predict_next_uniform_without_sequences():
    tp = make_tp(n_clusters=5)
    assert tp.predict_next(np.zeros(0)) == pytest.approx([0.2] * 5)


def test_predict_next_sums_to_one():
    tp = make_tp(n_clusters=6)
    rng = np.random.default_rng(1)
    prev = -1
    for _ in range(100):
        e = int(rng.integers(0, 6))
        if e == prev:
            e = (e + 1) % 6
        tp.observe_event(one_hot(e, 6))
        prev = e
    p_seq = tp.posterior_probs(tp.match_values())
    assert float(tp.predict_next(p_seq).sum()) == pytest.approx(1.0)


def test_cycle_prediction_points_to_the_successor():
    tp = make_tp(n_clusters=4)
    for e in [0, 1, 2] * 6:
        tp.observe_event(one_hot(e, 4))
    for hist, nxt in [([0, 1], 2), ([1, 2], 0), ([2, 0], 1)]:
        p_seq = tp.posterior_probs(tp.match_values(history=hist))
        assert int(np.argmax(tp.predict_next(p_seq))) == nxt


# ---------------------------------------------------------------------------
# context


def ctx_tp(n=200):
    tp = make_tp(provider_sizes=(2,))
    for _ in range(n):
        feed(tp, [0, 1, 2], ctx=(np.array([1.0, 0.0]),))
    for _ in range(n):
        feed(tp, [3, 4, 5], ctx=(np.array([0.0, 1.0]),))
    return tp


def test_context_likelihood_separates_learned_associations():
    tp = ctx_tp()
    pc = tp.context_likelihood(0, ctx_history=[np.array([1.0, 0.0])] * 2)
    # per-position factors clamp at 0.99 and 0.01; two lookbehind positions
    assert pc == pytest.approx([0.99 ** 2, 0.01 ** 2], abs=1e-12)


def test_context_likelihood_neutral_when_unseen_context():
    tp = ctx_tp()
    pc = tp.context_likelihood(0, ctx_history=[np.array([0.5, 0.5])] * 2)
    # a half-and-half context matches both sequences equally
    assert pc[0] == pytest.approx(pc[1], rel=0.2)


def test_context_likelihood_fresh_rows_are_uninformative():
    tp = make_tp(provider_sizes=(4,))
    feed(tp, [0, 1, 2], ctx=(np.full(4, 0.25),))
    pc = tp.context_likelihood(0, ctx_history=[np.array([1.0, 0.0, 0.0, 0.0])] * 2)
    # one observation of a flat context leaves the row near uniform
    assert pc[0] == pytest.approx(0.25 ** 2, rel=0.1)


def test_context_counts_cover_future_positions_too():
    tp = make_tp(provider_sizes=(2,))
    feed(tp, [0, 1, 2], ctx=(np.array([1.0, 0.0]),))
    row = tp.row_of((0, 1, 2))
    lik = tp.future_likelihood(0)
    # position t_h+1 (the first lookahead) was counted as well
    assert lik[row, tp.t_h + 1, 0] == pytest.approx(2.0 / 3.0)
    assert lik[row, tp.t_h + 1, 1] == pytest.approx(1.0 / 3.0)


def test_posterior_with_context_reweights():
    tp = make_tp()
    feed(tp, [0, 1, 2])
    feed(tp, [3, 4, 5])
    p_bar = np.array([0.5, 0.5])
    post = tp.posterior_probs(p_bar, np.array([0.99, 0.01]))
    assert post == pytest.approx([0.99, 0.01], abs=1e-12)


def test_select_context_prefers_the_informative_provider():
    tp = make_tp(provider_sizes=(2, 2))
    p_bar = np.array([0.5, 0.5])
    informative = np.array([0.2, 0.8])
    flat = np.array([0.5, 0.5])

    def kl_after(pc):
        base = p_bar / p_bar.sum()
        q = p_bar * pc
        q = q / q.sum()
        return float(np.sum(base * np.log(base / q)))

    assert kl_after(informative) > kl_after(flat)
    assert tp.select_context(p_bar, [informative, flat]) == 0
    assert tp.select_context(p_bar, [flat, informative]) == 1


def test_select_context_tie_takes_lowest_index():
    tp = make_tp(provider_sizes=(2, 2))
    p_bar = np.array([0.4, 0.6])
    flat = np.array([0.5, 0.5])
    assert tp.select_context(p_bar, [flat, flat]) == 0


def test_context_likelihood_clamp_keeps_factors_interior():
    tp = ctx_tp(n=2000)
    pc = tp.context_likelihood(0, ctx_history=[np.array([1.0, 0.0])] * 2)
    assert pc.max() <= (0.99 ** 2) + 1e-12
    assert pc.min() >= (0.01 ** 2) - 1e-12


# ---------------------------------------------------------------------------
# export and helpers


def test_sequence_graph_lists_all_clusters_and_transitions():
    tp = make_tp(n_clusters=4)
    for e in [0, 1, 2] * 6:
        tp.observe_event(one_hot(e, 4))
    dot = tp.sequence_graph_dot()
    assert dot.startswith("digraph")
    for k in range(4):
        assert f'{k} [label="c{k}"]' in dot
    for a, b in [(0, 1), (1, 2), (2, 0)]:
        assert f"{a} -> {b}" in dot
    assert "3 ->" not in dot


def test_graph_edge_weights_aggregate_priors():
    tp = make_tp(n_clusters=4)
    # 11 events leave every rotation counted exactly three times
    for e in [0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1]:
        tp.observe_event(one_hot(e, 4))
    dot = tp.sequence_graph_dot()
    line = next(l for l in dot.splitlines() if "0 -> 1" in l)
    # edge 0->1 appears in rotations (0,1,2) and (2,0,1): 2/3 of total mass
    assert 'label="0.6667"' in line


def test_entropy_bits_known_values():
    assert entropy_bits(np.array([0.5, 0.5])) == pytest.approx(1.0)
    assert entropy_bits(np.array([1.0])) == pytest.approx(0.0)
    assert entropy_bits(np.array([0.25] * 4)) == pytest.approx(2.0)
    assert entropy_bits(np.zeros(0)) == 0.0


def test_priors_always_normalized():
    tp = make_tp(prior_decay=0.999)
    rng = np.random.default_rng(5)
    prev = -1
    for _ in range(300):
        e = int(rng.integers(0, 8))
        if e == prev:
            e = (e + 1) % 8
        tp.observe_event(one_hot(e))
        prev = e
    assert float(np.sum(tp.priors())) == pytest.approx(1.0)
    assert all(len(s) == tp.m for s in tp.sequences())
    for s in tp.sequences():
        for a, b in zip(s, s[1:]):
            assert a != b
