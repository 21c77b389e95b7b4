import numpy as np
import pytest

from doublebdris.scenario import SystemConfig, generate_channels


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def low_rank(rng, m, n, r):
    """Complex Gaussian ``m x n`` matrix of rank ``r`` (with probability one)."""
    return crandn(rng, m, r) @ crandn(rng, r, n)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    return SystemConfig(K=3, L=6, M1=4, M2=3)


@pytest.fixture
def channels(small_cfg):
    return generate_channels(small_cfg, np.random.default_rng(7))


@pytest.fixture
def acceptance(request):
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else "")
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
