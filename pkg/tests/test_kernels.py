"""numba and numpy kernel twins must agree."""

import subprocess
import sys

import numpy as np
import pytest

from sast_snn import _accel, kernels

needs_numba = pytest.mark.skipif(not _accel.NUMBA_INSTALLED, reason="numba not installed")


@needs_numba
def test_bin_counts_twins_agree():
    rng = np.random.default_rng(0)
    n = 5000
    args = (rng.integers(0, 7, n), rng.integers(0, 2, n), rng.integers(0, 5, n), rng.integers(0, 6, n), 7, 5, 6)
    a = kernels.bin_counts_numpy(*args)
    b = kernels.bin_counts_numba(*args)
    assert np.array_equal(a, b)


@needs_numba
@pytest.mark.parametrize("hard", [False, True])
def test_lif_forward_twins_agree(hard):
    rng = np.random.default_rng(1)
    cur = rng.normal(0.8, 1.0, size=(9, 4, 7))
    theta = rng.uniform(0.5, 1.5, 7)
    ua, sa = kernels.lif_forward_numpy(cur, 0.6, theta, 25.0, hard)
    ub, sb = kernels.lif_forward_numba(cur, 0.6, theta, 25.0, hard)
    np.testing.assert_allclose(ua, ub, rtol=0, atol=1e-13)
    np.testing.assert_allclose(sa, sb, rtol=0, atol=1e-13)


@needs_numba
def test_lif_backward_twins_agree():
    rng = np.random.default_rng(2)
    u = rng.normal(1.0, 0.5, size=(9, 4, 7))
    gs = rng.normal(size=u.shape)
    theta = rng.uniform(0.5, 1.5, 7)
    a = kernels.lif_backward_numpy(gs, u, 0.5, theta, 25.0)
    b = kernels.lif_backward_numba(gs, u, 0.5, theta, 25.0)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


@needs_numba
@pytest.mark.parametrize("delayed", [False, True])
def test_fixed_point_twins_agree_exactly(delayed):
    rng = np.random.default_rng(3)
    cur = rng.integers(-400, 700, size=(10, 5, 6)).astype(np.int64)
    bias = rng.integers(-50, 50, 6).astype(np.int64)
    theta = rng.integers(100, 400, 6).astype(np.int64)
    args = (cur, bias, theta, 128, 8, -(1 << 11), (1 << 11) - 1, delayed)
    sa, ua = kernels.fixed_point_lif_numpy(*args)
    sb, ub = kernels.fixed_point_lif_numba(*args)
    assert np.array_equal(sa, sb) and np.array_equal(ua, ub)


def test_env_flag_selects_numpy_backend():
    code = "from sast_snn import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True,
                         env={"SAST_SNN_DISABLE_NUMBA": "1", "PATH": ""})
    assert out.stdout.strip() == "numpy"
