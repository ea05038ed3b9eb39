import io

import numpy as np
import pytest

from bbmmed.core import DimensionError, RowSumError, TimeGrid
from bbmmed.degroot import degroot_at, degroot_steady_state, degroot_trajectory, propagate
from bbmmed.numerics import left_unit_eigenvector

from conftest import O0
from oracles import power_left_eigenvector, rk4


def test_trajectory_matches_closed_form(paper_net):
    g = TimeGrid(1e-2, 500)
    tr = degroot_trajectory(paper_net.W, O0, g)
    ref = degroot_at(paper_net.W, O0, g.times[::50])
    np.testing.assert_allclose(tr.opinions[::50], ref, atol=1e-12)


def test_trajectory_matches_ode_solution(paper_net):
    W = np.asarray(paper_net.W)
    ref = rk4(lambda o: (W - np.eye(3)) @ o, O0, 3.0, 3000)
    np.testing.assert_allclose(degroot_at(W, O0, [3.0])[0], ref, atol=1e-10)


def test_steady_state_is_weighted_consensus(paper_net):
    ell = left_unit_eigenvector(paper_net.W)
    ss = degroot_steady_state(paper_net.W, O0)
    np.testing.assert_allclose(ss, np.full(3, power_left_eigenvector(paper_net.W) @ O0), atol=1e-8)
    np.testing.assert_allclose(degroot_at(paper_net.W, O0, [60.0])[0], ss, atol=1e-8)
    assert ss[0] == pytest.approx(ell @ np.array(O0))


def test_consensus_preserves_agreement(paper_net):
    g = TimeGrid(0.1, 30)
    tr = degroot_trajectory(paper_net.W, [0.4, 0.4, 0.4], g)
    np.testing.assert_allclose(tr.opinions, 0.4, atol=1e-14)


def test_propagate_counts():
    out = propagate(np.eye(2) * 0.5, np.array([1.0, 2.0]), 3)
    np.testing.assert_allclose(out[-1], [0.125, 0.25])
    assert out.shape == (4, 2)


def test_input_checks(paper_net):
    with pytest.raises(DimensionError):
        degroot_trajectory(paper_net.W, [0.1, 0.2], TimeGrid(0.1, 3))
    with pytest.raises(RowSumError):
        degroot_trajectory([[0.5, 0.4], [0.5, 0.5]], [0.1, 0.2], TimeGrid(0.1, 3))


def test_csv_layout(paper_net):
    buf = io.StringIO()
    degroot_trajectory(paper_net.W, O0, TimeGrid(0.5, 2)).write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "time,o_1,o_2,o_3"
    assert lines[1] == "0.0,0.2,0.2,0.8"
    assert len(lines) == 4


def test_identity_network_is_static():
    tr = degroot_trajectory(np.eye(3), O0, TimeGrid(0.1, 20))
    np.testing.assert_array_equal(tr.opinions, np.tile(O0, (21, 1)))


def test_doubly_stochastic_consensus_is_average():
    W = np.array([[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]])
    np.testing.assert_allclose(degroot_steady_state(W, O0), np.mean(O0), atol=1e-12)
    np.testing.assert_allclose(degroot_steady_state(W, [1.0, 1.0, 1.0]), 1.0, atol=1e-12)


def test_opinions_stay_in_initial_hull(rng):
    for _ in range(20):
        W = rng.random((4, 4))
        W /= W.sum(axis=1, keepdims=True)
        o0 = rng.random(4)
        tr = degroot_trajectory(W, o0, TimeGrid(0.05, 200))
        assert tr.opinions.min() >= o0.min() - 1e-12 and tr.opinions.max() <= o0.max() + 1e-12
