import numpy as np
import pytest

from graylearn.numerics import init_params
from graylearn.rng import Xoshiro256


@pytest.fixture
def rng():
    return Xoshiro256(12345)


def random_net(seed, layout=(4, 6, 5, 3), bias_scale=0.1):
    g = Xoshiro256(seed)
    params = init_params(layout, g)
    for b in params.biases:
        b += bias_scale * g.normals(b.shape)
    return params


def random_probs(g: np.random.Generator, k: int, n: int) -> np.ndarray:
    """Random points of the clamped simplex, from a spread of Dirichlet shapes."""
    from graylearn.numerics import softmax

    scale = g.choice([0.3, 1.0, 3.0, 10.0], size=(n, 1))
    return softmax(g.normal(size=(n, k)) * scale)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
