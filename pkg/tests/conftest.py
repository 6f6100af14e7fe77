import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from polytoep.factorization import cone_factorize
from polytoep.lattice_geometry import ConeSpec
from polytoep.symbol import FourierMap, GridFunction, synthesize

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# alpha = 1 - chi1/2 (the running symbol) and 1 - chi1/2 - chi1 chi2 / 3
ALPHA_RUNNING = {(0, 0): 1.0, (1, 0): -0.5}
ALPHA_SECOND = {(0, 0): 1.0, (1, 0): -0.5, (1, 1): -1.0 / 3.0}
# complex coefficients, spectrum inside the cone [(1,0),(1,1)]
ALPHA_THIRD = {(0, 0): 2.0, (1, 0): 0.3j, (1, 1): -0.4, (2, 1): 0.2}
CONE = ((1, 0), (1, 1))


def symbol_from_alpha(alpha: dict, N: int = 256) -> GridFunction:
    a = synthesize(FourierMap.from_dict(alpha, hermitian=False), N).values
    return GridFunction(np.abs(a) ** 2)


def f_coeffs_from_alpha(alpha: dict) -> FourierMap:
    """Exact coefficients of |alpha|^2 by autocorrelation."""
    out: dict = {}
    for m, a in alpha.items():
        for n, b in alpha.items():
            k = (m[0] - n[0], m[1] - n[1])
            out[k] = out.get(k, 0j) + a * np.conj(b)
    return FourierMap.from_dict(out, hermitian=True)


@pytest.fixture(scope="session")
def cone():
    return ConeSpec(*CONE)


@pytest.fixture(scope="session")
def factorizations(cone):
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        for name, al in (("running", ALPHA_RUNNING), ("second", ALPHA_SECOND), ("third", ALPHA_THIRD)):
            out[name] = cone_factorize(symbol_from_alpha(al), cone)
    return out


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
