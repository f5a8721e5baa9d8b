import pytest

from planarop.geometry import PotentialSpec, build_geometry
from planarop.oracle import build_quadrature, orthonormalize

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def record():
    """record(tag, ok, detail) prints and stores one pass/fail line."""

    def _record(tag, ok, detail=""):
        line = f"{tag}: {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        print(line)
        ACCEPTANCE.append(line)
        return ok

    return _record


@pytest.fixture(scope="session")
def ginibre_oracle():
    """m = 10, moments up to degree 8 at 50 digits."""
    rule = build_quadrature(PotentialSpec("ginibre"), 10, n_max=8, digits=50)
    return orthonormalize(rule, 8)


@pytest.fixture(scope="session")
def elliptic_case():
    """t = 0.3, tau = 0.25, m = 40, n = 10 (geometry and 50-digit oracle)."""
    spec = PotentialSpec("elliptic", 0.3)
    geom = build_geometry(spec, 0.25, N=48, R=40)
    rule = build_quadrature(spec, 40, n_max=12, digits=50)
    return geom, orthonormalize(rule, 12)


@pytest.fixture(scope="session")
def berezin_case():
    """t = 0.3, tau = 0.15, m = 60, n = 9, off-spectral source z."""
    spec = PotentialSpec("elliptic", 0.3)
    rule = build_quadrature(spec, 60, n_max=8, digits=50)
    return orthonormalize(rule, 8), 0.45 + 0.2j, 9
