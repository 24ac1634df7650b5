import numpy as np
import pytest

from vitalattn.numerics import Tape, Tensor, backward


def zero_parameters(model):
    for p in model.parameters():
        p.data[...] = 0.0


def copy_parameters(src, dst):
    target = dict(dst.named_parameters())
    for name, p in src.named_parameters():
        target[name].data[...] = p.data


def fd_grad(f, x, step=1e-5):
    """Central differences of a numpy -> float function."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        keep = x[idx]
        x[idx] = keep + step
        up = f()
        x[idx] = keep - step
        down = f()
        x[idx] = keep
        g[idx] = (up - down) / (2 * step)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
