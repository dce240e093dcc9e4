import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sast_snn.network import init_params  # noqa: E402


def tiny_net(seed, dims=(8, 6, 3), gain=3.0, bias_scale=0.5):
    """Random tiny net with weights scaled up so membranes actually move
    through the surrogate's responsive region."""
    rng = np.random.default_rng(seed)
    p = init_params(list(dims), rng=rng)
    p = p.with_vector(p.to_vector() * gain)
    for layer in p.layers:
        layer.b[:] = rng.normal(0.0, bias_scale, layer.b.shape)
    p.b_out[:] = rng.normal(0.0, 0.1, p.b_out.shape)
    return p


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from _verdicts import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        name, ok, detail = RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {name}: {detail}")
