import numpy as np
import pytest

from striprct.design import DesignDims, PotentialOutcomeTable


def checker_table(P, Q, t1, t2, treatments=((0, 0),), B=2):
    """Outcomes t1 at units (1,1),(2,2) and t2 at (1,2),(2,1) of block 1 for the given
    treatments; every other outcome is (t1 + t2) / 2."""
    t0 = (t1 + t2) / 2
    y = np.full((B, P, Q, P, Q), t0, dtype=float)
    for p, q in treatments:
        y[0, 0, 0, p, q] = y[0, 1, 1, p, q] = t1
        y[0, 0, 1, p, q] = y[0, 1, 0, p, q] = t2
    return PotentialOutcomeTable(y, DesignDims(B, P, Q))


def additive_table(rng, B, P, Q, between_only=False):
    """Unit effect plus treatment effect; with ``between_only`` each block also
    gets its own within-block interaction that averages out of the block means."""
    unit = rng.normal(size=(B, P, Q, 1, 1))
    effect = rng.normal(size=(1, 1, 1, P, Q))
    y = unit + effect
    if between_only:
        noise = rng.normal(size=(B, P, Q, P, Q))
        y = y + noise - noise.mean(axis=(1, 2), keepdims=True)
    return PotentialOutcomeTable(np.broadcast_to(y, (B, P, Q, P, Q)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, name, ok, detail):
        request.config.acceptance_lines.append(f"[{number:>2}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok

    return record
