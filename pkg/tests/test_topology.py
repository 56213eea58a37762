"""Tests for layered wiring, latched messaging, and config validation."""

from __future__ import annotations

import numpy as np
import pytest

from expertnet.config import ConfigError, build_network


def two_layer_topology(**overrides):
    topo = {
        "layers": [
            {"experts": 1, "clusters": 4, "t_h": 1, "t_f": 1,
             "boost_threshold": 100000, "learn_interval": 10 ** 9,
             "epsilon_explore": 0.0},
            {"experts": 1, "clusters": 3, "t_h": 1, "t_f": 1,
             "boost_threshold": 100000, "learn_interval": 10 ** 9,
             "epsilon_explore": 0.0},
        ],
        "context_edges": [[[1, 0], [0, 0]]],
        "goal_edges": [[[1, 0], [0, 0]]],
    }
    topo.update(overrides)
    return topo


def one_hot(k, n):
    v = np.zeros(n)
    v[k] = 1.0
    return v


# ---------------------------------------------------------------------------
# construction


def test_build_two_layer_network():
    net = build_network(two_layer_topology(), obs_dim=4, seed=0)
    assert net.n_layers == 2
    assert net.layer_input_dim(0) == 4
    assert net.layer_input_dim(1) == 4  # bottom layer emits 4 cluster outputs
    bottom = net.experts[0][0]
    top = net.experts[1][0]
    assert bottom.obs_dim == 4
    assert top.obs_dim == 4
    assert bottom.provider_sizes == (6,)  # top co vector: 2 * 3 clusters
    assert top.provider_sizes == ()


def test_seeds_differ_between_experts():
    topo = {"layers": [{"experts": 2, "clusters": 4,
                        "receptive_fields": [[0, 2], [2, 4]]}]}
    net = build_network(topo, obs_dim=4, seed=1)
    a, b = net.experts[0]
    assert not np.array_equal(a.sp.centers, b.sp.centers)


def test_same_seed_rebuilds_identical_network():
    na = build_network(two_layer_topology(), obs_dim=4, seed=5)
    nb = build_network(two_layer_topology(), obs_dim=4, seed=5)
    for (key, ea), (_, eb) in zip(na.iter_experts(), nb.iter_experts()):
        assert np.array_equal(ea.sp.centers, eb.sp.centers), key


# ---------------------------------------------------------------------------
# tick mechanics


def test_constant_input_fires_once_through_the_stack():
    net = build_network(two_layer_topology(), obs_dim=4, seed=0)
    obs = np.array([1.0, 0.0, 0.0, 0.0])
    first = net.tick(obs)
    assert all(first.fired().values())
    for _ in range(5):
        later = net.tick(obs)
        assert not any(later.fired().values())


def test_parent_reads_concatenated_child_outputs():
    net = build_network(two_layer_topology(), obs_dim=4, seed=0)
    obs = np.array([1.0, 0.0, 0.0, 0.0])
    res = net.tick(obs)
    child_y = res.results[(0, 0)].y
    parent = net.experts[1][0]
    # the parent classified the child output vector this very tick
    w = parent.sp.winner(child_y)
    assert res.results[(1, 0)].fired
    assert int(np.argmax(res.results[(1, 0)].co[:3])) == w


def test_context_arrives_one_tick_late():
    net = build_network(two_layer_topology(), obs_dim=4, seed=0)
    child = net.experts[0][0]
    seq = [0, 1, 2, 3, 0, 2]
    cos = []
    for k in seq:
        res = net.tick(one_hot(k, 4))
        cos.append(res.results[(1, 0)].co.copy())
    # the context snapshot the child recorded at its latest event is the
    # parent message from the tick before
    recorded = child.tp._ctx_hist[-1][0]
    assert np.array_equal(recorded, cos[-2])


def test_goal_latch_forwards_parent_go():
    topo = two_layer_topology()
    topo["layers"][1]["theta"] = "greedy"
    net = build_network(topo, obs_dim=4, seed=0)
    child = net.experts[0][0]
    seq = [0, 1, 2, 3, 0, 2]
    gos = []
    for k in seq:
        res = net.tick(one_hot(k, 4))
        gos.append(res.results[(1, 0)].go.copy())
    assert child._last_goals is not None
    assert np.array_equal(child._last_goals[0], gos[-2])


def test_removing_edges_leaves_upward_outputs_unchanged():
    wired = build_network(two_layer_topology(), obs_dim=4, seed=3)
    bare = build_network(two_layer_topology(context_edges=[], goal_edges=[]),
                         obs_dim=4, seed=3)
    rng = np.random.default_rng(0)
    for _ in range(10):
        obs = rng.random(4)
        ra = wired.tick(obs)
        rb = bare.tick(obs)
        for key in ra.results:
            assert np.array_equal(ra.results[key].y, rb.results[key].y), key


def test_action_is_returned_only_on_bottom_events():
    topo = {
        "layers": [{"experts": 1, "clusters": 4, "theta": "greedy",
                    "epsilon_explore": 0.0, "learn_interval": 10 ** 9,
                    "boost_threshold": 100000}],
        "action_slice": [2, 4],
    }
    net = build_network(topo, obs_dim=4, seed=0)
    first = net.tick(one_hot(0, 4))
    assert first.action is not None
    assert first.action.shape == (2,)
    held = net.tick(one_hot(0, 4))
    assert held.action is None
    fired_again = net.tick(one_hot(1, 4))
    assert fired_again.action is not None


def test_freeze_learning_cascades():
    net = build_network(two_layer_topology(), obs_dim=4, seed=0)
    net.freeze_learning()
    assert all(not ex.learning_enabled for _, ex in net.iter_experts())
    assert all(ex.epsilon_explore == 0.0 for _, ex in net.iter_experts())


# ---------------------------------------------------------------------------
# event trace


def test_trace_is_reproducible_for_equal_seeds():
    na = build_network(two_layer_topology(), obs_dim=4, seed=9)
    nb = build_network(two_layer_topology(), obs_dim=4, seed=9)
    rng = np.random.default_rng(4)
    stream = rng.random((20, 4))
    for obs in stream:
        na.tick(obs)
        nb.tick(obs)
    assert na.trace_digest == nb.trace_digest


def test_trace_differs_across_seeds():
    na = build_network(two_layer_topology(), obs_dim=4, seed=1)
    nb = build_network(two_layer_topology(), obs_dim=4, seed=2)
    rng = np.random.default_rng(4)
    stream = rng.random((20, 4))
    for obs in stream:
        na.tick(obs)
        nb.tick(obs)
    assert na.trace_digest != nb.trace_digest


# ---------------------------------------------------------------------------
# validation


def test_receptive_field_out_of_range():
    topo = {"layers": [{"experts": 1, "clusters": 4,
                        "receptive_fields": [[0, 9]]}]}
    with pytest.raises(ConfigError, match=r"layers\[0\].receptive_fields\[0\]"):
        build_network(topo, obs_dim=4)


def test_unknown_theta_kind():
    topo = {"layers": [{"experts": 1, "clusters": 4, "theta": "softmax"}]}
    with pytest.raises(ConfigError, match=r"layers\[0\].theta"):
        build_network(topo, obs_dim=4)


def test_goal_edge_without_context_edge():
    topo = two_layer_topology(context_edges=[])
    with pytest.raises(ConfigError, match=r"goal_edges\[0\]"):
        build_network(topo, obs_dim=4)


def test_dangling_context_edge():
    topo = two_layer_topology(context_edges=[[[2, 0], [0, 0]]], goal_edges=[])
    with pytest.raises(ConfigError, match=r"context_edges\[0\]"):
        build_network(topo, obs_dim=4)


def test_context_edge_must_point_downward():
    topo = two_layer_topology(context_edges=[[[0, 0], [1, 0]]], goal_edges=[])
    with pytest.raises(ConfigError, match="higher layer"):
        build_network(topo, obs_dim=4)


def test_duplicate_context_edge():
    topo = two_layer_topology(
        context_edges=[[[1, 0], [0, 0]], [[1, 0], [0, 0]]], goal_edges=[])
    with pytest.raises(ConfigError, match=r"context_edges\[1\]"):
        build_network(topo, obs_dim=4)


def test_window_length_consistency_check():
    topo = {"layers": [{"experts": 1, "clusters": 4, "t_h": 1, "t_f": 1, "m": 5}]}
    with pytest.raises(ConfigError, match=r"layers\[0\].m"):
        build_network(topo, obs_dim=4)


def test_unknown_layer_key():
    topo = {"layers": [{"experts": 1, "clusters": 4, "learing_rate": 0.5}]}
    with pytest.raises(ConfigError, match="learing_rate"):
        build_network(topo, obs_dim=4)


def test_lookahead_must_be_positive():
    topo = {"layers": [{"experts": 1, "clusters": 4, "t_f": 0}]}
    with pytest.raises(ConfigError, match=r"layers\[0\].t_f"):
        build_network(topo, obs_dim=4)


def test_action_slice_needs_a_covering_receptive_field():
    topo = {
        "layers": [{"experts": 2, "clusters": 4,
                    "receptive_fields": [[0, 2], [2, 4]]}],
        "action_slice": [1, 3],
    }
    with pytest.raises(ConfigError, match="action_slice"):
        build_network(topo, obs_dim=4)


def test_action_slice_covered_twice_is_ambiguous():
    topo = {
        "layers": [{"experts": 2, "clusters": 4,
                    "receptive_fields": [[0, 4], [0, 4]]}],
        "action_slice": [1, 3],
    }
    with pytest.raises(ConfigError, match="both"):
        build_network(topo, obs_dim=4)


def test_action_slice_must_fit_observation():
    topo = {"layers": [{"experts": 1, "clusters": 4}], "action_slice": [2, 9]}
    with pytest.raises(ConfigError, match="action_slice"):
        build_network(topo, obs_dim=4)


def test_unknown_topology_key():
    topo = {"layers": [{"experts": 1, "clusters": 4}], "goal_edgez": []}
    with pytest.raises(ConfigError, match="goal_edgez"):
        build_network(topo, obs_dim=4)


def test_empty_layers_rejected():
    with pytest.raises(ConfigError, match="layers"):
        build_network({"layers": []}, obs_dim=4)
