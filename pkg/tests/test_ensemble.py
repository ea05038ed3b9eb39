import io
import json

import numpy as np
import pytest

from bbmmed import analytic
from bbmmed.bbm import sample_path
from bbmmed.core import CheckpointError, GridMismatchError, MessageModelParams, NetworkModel, SeedSpec, TimeGrid
from bbmmed.ensemble import (
    MessageOracles,
    OpinionOracles,
    Thresholds,
    empirical_interior_pdf,
    record_steps,
    run_message_ensemble,
    run_opinion_ensemble,
    validate,
)
from bbmmed.med import MedSystem, med_trajectory

from conftest import O0, RAW_U, RAW_W

FIXED = MessageModelParams.fixed(0.3, 1.0)
UNIFORM = MessageModelParams(1.0, 0.2, 0.8)


@pytest.fixture(scope="module")
def msg_stats():
    g = TimeGrid.from_horizon(2.0, 1e-3)
    return run_message_ensemble(FIXED, g, 2000, seed=11, checkpoints=[0.0, 0.01, 0.05, 0.2])


def test_message_invariants(msg_stats):
    s = msg_stats
    for h in (s.hit0_freq, s.hit1_freq):
        assert np.all((h >= 0) & (h <= 1))
        assert np.all(np.diff(h) >= 0)
    assert np.all(s.hit0_freq + s.hit1_freq <= 1)
    assert np.all(s.variance >= 0)
    for k in s.survivors:
        t = k * s.grid.dt
        i = s.index_of(t)
        mass = empirical_interior_pdf(s, t, 100).mass.sum()
        assert abs(mass - (1 - s.hit0_freq[i] - s.hit1_freq[i])) <= 1e-12


def test_first_grid_point_pdf_is_point_mass(msg_stats):
    h = empirical_interior_pdf(msg_stats, 0.0, 100)
    assert h.mass[30] == 1.0 and h.mass.sum() == 1.0


def test_pdf_close_to_analytic_curve(msg_stats):
    for t in (0.01, 0.05):
        h = empirical_interior_pdf(msg_stats, t, 50)
        expected = analytic.interior_bin_masses(h.edges, t, 0.3, 1.0)
        se = np.sqrt(expected * (1 - expected) / msg_stats.n_runs)
        assert np.max(np.abs(h.mass - expected)) < 5 * se.max()


def test_pdf_checkpoint_errors(msg_stats):
    with pytest.raises(CheckpointError):
        empirical_interior_pdf(msg_stats, 0.03, 10)
    with pytest.raises(CheckpointError):
        empirical_interior_pdf(msg_stats, 0.0105, 10)


def test_deterministic_and_thread_independent():
    g = TimeGrid(1e-3, 800)
    a = run_message_ensemble(UNIFORM, g, 600, seed=3, threads=1, checkpoints=[0.1])
    b = run_message_ensemble(UNIFORM, g, 600, seed=3, threads=3, checkpoints=[0.1])
    for f in ("mean", "variance", "hit0_freq", "hit1_freq"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    np.testing.assert_array_equal(a.survivors[100], b.survivors[100])
    c = run_message_ensemble(UNIFORM, g, 600, seed=4, threads=1)
    assert not np.array_equal(a.mean, c.mean)


def test_tiny_rate_gives_no_spread():
    s = run_message_ensemble(MessageModelParams.fixed(0.3, 1e-12), TimeGrid(1e-3, 500), 50, seed=0)
    assert np.max(s.variance) < 1e-20
    assert s.hit0_freq[-1] == 0 and s.hit1_freq[-1] == 0


def test_zero_length_grid():
    s = run_message_ensemble(UNIFORM, TimeGrid(1e-3, 0), 20, seed=0)
    assert list(s.times) == [0.0]
    assert s.hit0_freq[0] == 0


def test_message_mean_within_se(msg_stats):
    z = (msg_stats.mean - 0.3) / np.maximum(msg_stats.se_mean, 1e-15)
    assert np.max(np.abs(z)) < 4.5


def test_se_scales_with_run_count():
    g = TimeGrid(1e-3, 300)
    s1 = run_message_ensemble(UNIFORM, g, 1000, seed=21)
    s4 = run_message_ensemble(UNIFORM, g, 4000, seed=22)
    ratio = s4.se_mean[-1] / s1.se_mean[-1]
    assert 0.45 <= ratio <= 0.55


def test_validation_passes_for_correct_sampler(msg_stats):
    rep = validate(msg_stats, MessageOracles(FIXED))
    assert rep.passed, rep.to_text()
    json.loads(rep.to_json())


def test_doubled_rate_is_caught():
    g = TimeGrid.from_horizon(1.0, 1e-3)
    wrong = run_message_ensemble(MessageModelParams(2.0, 0.2, 0.8), g, 4000, seed=5)
    rep = validate(wrong, MessageOracles(UNIFORM))
    assert not rep.passed
    var_z = [c.z for c in rep.checks if c.name.startswith("variance vs upper")]
    assert max(var_z) > 10


def test_too_few_runs_inconclusive():
    s = run_message_ensemble(FIXED, TimeGrid(1e-3, 200), 2, seed=0)
    rep = validate(s, MessageOracles(FIXED))
    assert rep.inconclusive and not rep.passed
    assert "inconclusive" in rep.to_text()


def test_one_sided_bound_holds_across_seeds():
    g = TimeGrid.from_horizon(1.0, 1e-3)
    th = Thresholds()
    for seed in range(20):
        s = run_message_ensemble(UNIFORM, g, 500, seed=seed, record_every=10)
        rep = validate(s, MessageOracles(UNIFORM), th)
        bound_checks = [c for c in rep.checks if c.kind == "upper"]
        assert bound_checks and all(c.passed for c in bound_checks), seed


def test_record_steps():
    g = TimeGrid(0.1, 10)
    np.testing.assert_array_equal(record_steps(g, 4, [0.5]), [0, 4, 5, 8, 10])


@pytest.fixture(scope="module")
def paper_system():
    net = NetworkModel.build(RAW_W, RAW_U, 0.3, renormalize=True)
    return MedSystem.build(net, 1e-2)


def test_opinion_ensemble_equals_direct_simulation(paper_system):
    # the closed-form tail after absorption must agree with plain stepping
    g = TimeGrid(1e-2, 600)
    stats = run_opinion_ensemble(paper_system, O0, UNIFORM, g, 6, seed=8, record_every=7)
    seeds = SeedSpec(8)
    trajs = []
    for r in range(6):
        paths = [sample_path(UNIFORM, g, seeds.stream(r, j)) for j in range(2)]
        trajs.append(med_trajectory(paper_system, O0, paths).opinions[stats.steps])
    np.testing.assert_allclose(stats.mean, np.mean(trajs, axis=0), atol=1e-12)
    np.testing.assert_allclose(stats.variance, np.var(trajs, axis=0, ddof=1), atol=1e-12)


def test_opinion_ensemble_validates(paper_system):
    g = TimeGrid.from_horizon(30.0, 1e-2)
    stats = run_opinion_ensemble(paper_system, O0, UNIFORM, g, 1500, seed=2)
    rep = validate(stats, OpinionOracles(paper_system, O0, 0.5))
    assert rep.passed, rep.to_text()
    buf = io.StringIO()
    stats.write_csv(buf)
    assert buf.getvalue().startswith("time,agent,mean,variance,ci_halfwidth")


def test_alpha_one_variance_exactly_zero():
    net = NetworkModel.build(RAW_W, RAW_U, 1.0, renormalize=True)
    sys_ = MedSystem.build(net, 1e-2)
    g = TimeGrid(1e-2, 1000)
    stats = run_opinion_ensemble(sys_, O0, UNIFORM, g, 300, seed=1)
    assert np.all(stats.variance == 0.0)
    assert validate(stats, OpinionOracles(sys_, O0, 0.5)).passed


def test_grid_mismatch(paper_system):
    with pytest.raises(GridMismatchError):
        run_opinion_ensemble(paper_system, O0, UNIFORM, TimeGrid(1e-3, 10), 5)
    s = run_message_ensemble(FIXED, TimeGrid(1e-3, 10), 5)
    with pytest.raises(GridMismatchError):
        validate(s, OpinionOracles(paper_system, O0, 0.5))


def test_empirical_variance_increases_over_time():
    # no proof of monotone variance is relied on; check it on simulated data instead
    g = TimeGrid.from_horizon(5.0, 1e-3)
    s = run_message_ensemble(UNIFORM, g, 4000, seed=31)
    idx = [s.index_of(round(t, 3)) for t in np.geomspace(0.01, 5.0, 12)]
    v, se = s.variance[idx], s.se_variance[idx]
    assert np.all(np.diff(v) >= -3 * np.hypot(se[1:], se[:-1]))
    assert v[-1] > v[0]
