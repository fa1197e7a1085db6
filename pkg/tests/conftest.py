from pathlib import Path

import numpy as np
import pytest

from mapsoe import MarkovArrivalProcess, Mmpp, mtcp_from_slow_mmpp

MODELS = Path(__file__).resolve().parent.parent / "models"


def random_generator(p, rng, density=1.0):
    """Irreducible generator with rates in (0.1, 3); a ring keeps it irreducible."""
    Q = rng.uniform(0.1, 3.0, size=(p, p)) * (rng.random((p, p)) < density)
    for i in range(p):
        Q[i, (i + 1) % p] = max(Q[i, (i + 1) % p], 0.1)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def random_map(p, rng):
    """Random MAP: a random generator split into C and D entrywise."""
    Q = random_generator(p, rng)
    frac = rng.random((p, p))
    D = np.where(Q > 0, Q * frac, 0.0)
    D[np.diag_indices(p)] = rng.uniform(0.5, 2.0, size=p)
    return MarkovArrivalProcess(Q - D, D)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ref_mmpp():
    return Mmpp([[-5.0, 5.0], [5.0, -5.0]], [10.0, 40.0])


@pytest.fixture
def ref_map(ref_mmpp):
    return ref_mmpp.to_map()


@pytest.fixture
def soe_map(ref_mmpp):
    return mtcp_from_slow_mmpp(ref_mmpp).to_map()


@pytest.fixture
def models_dir():
    return MODELS


_ACCEPTANCE = []


@pytest.fixture
def record():
    """Collect one acceptance line; printed in the terminal summary."""

    def _record(number, ok, detail):
        _ACCEPTANCE.append((number, ok, detail))
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
