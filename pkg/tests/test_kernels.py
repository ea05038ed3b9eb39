import os
import subprocess
import sys

import numpy as np
import pytest

from bbmmed import kernels
from bbmmed.bbm import simulate_absorbed
from bbmmed.core import SeedSpec

needs_compiled = pytest.mark.skipif(kernels.compiled is None, reason="compiled extension not built")


def test_backend_name_consistent():
    assert kernels.BACKEND == ("cython" if kernels.compiled is not None else "python")


def test_pure_python_switch():
    env = dict(os.environ, BBMMED_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import bbmmed.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
@pytest.mark.parametrize("bridge", [True, False])
def test_paths_identical_across_backends(bridge):
    for i in range(200):
        a = simulate_absorbed(0.3, 1.0, 1e-4, 20000, SeedSpec(5).stream(i), bridge, kernel=kernels.compiled)
        b = simulate_absorbed(0.3, 1.0, 1e-4, 20000, SeedSpec(5).stream(i), bridge, kernel=kernels.python)
        np.testing.assert_array_equal(a.head, b.head)
        assert a.bound == b.bound


@needs_compiled
def test_zoh_runs_identical_across_backends(rng):
    R, M, N, K = 5, 2, 3, 400
    P = rng.random((N, N)) * 0.3
    G = rng.random((N, M)) * 0.1
    O0 = rng.random((R, N))
    S = rng.random((R, M, K))
    stop = np.array([400, 13, 0, 200, 399], dtype=np.int64)
    rec = np.array([0, 1, 5, 13, 100, 200, 399, 400], dtype=np.int64)
    outs = []
    for mod in (kernels.compiled, kernels.python):
        out = np.full((R, len(rec), N), np.nan)
        mod.zoh_runs(P, G, O0, S, stop, rec, out)
        outs.append(out)
    np.testing.assert_array_equal(np.isnan(outs[0]), np.isnan(outs[1]))
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-13, atol=1e-15, equal_nan=True)


def test_zoh_runs_matches_explicit_loop(rng):
    N, M, K = 3, 2, 50
    P = rng.random((N, N)) * 0.3
    G = rng.random((N, M))
    O0 = rng.random((1, N))
    S = rng.random((1, M, K))
    rec = np.arange(K + 1, dtype=np.int64)
    out = np.empty((1, K + 1, N))
    kernels.zoh_runs(P, G, O0, S, np.array([K], dtype=np.int64), rec, out)
    o = O0[0].copy()
    for k in range(K):
        o = P @ o + G @ S[0, :, k]
        np.testing.assert_allclose(out[0, k + 1], o, rtol=1e-13)
