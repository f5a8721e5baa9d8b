import math

import numpy as np
import pytest
from scipy.special import gammaln

from planarop.engine import HarmonicField
from planarop.errors import ConfigError, DomainError, UsageError
from planarop.geometry import PotentialSpec, build_geometry
from planarop.series_core import CircleSeries
from planarop.wavefield import (
    WaveConfig,
    build_potential_U,
    check_potential_equation,
    gaussian_cdf,
    harmonic_conjugate,
    predict_P,
    predict_wave,
    solve_wave,
)

TH = np.linspace(0, 2 * np.pi, 12, endpoint=False)


@pytest.fixture(scope="module")
def gin():
    return build_geometry(PotentialSpec("ginibre"), 1.0)


@pytest.fixture(scope="module")
def gin_quarter():
    return build_geometry(PotentialSpec("ginibre"), 0.25)


@pytest.fixture(scope="module")
def ell():
    return build_geometry(PotentialSpec("elliptic", 0.3), 0.25, N=48, R=40)


def _solve(geom, m, tau, **kw):
    cfg = WaveConfig(m=m, tau=tau, **kw)
    return cfg, solve_wave(geom, cfg)


def exact_ginibre_P(m, n, z):
    return np.exp(0.5 * (n + 1) * math.log(m) - 0.5 * gammaln(n + 1)) * z**n


# -- erf -------------------------------------------------------------------------


def test_gaussian_cdf():
    assert gaussian_cdf(0.0) == 0.5
    for x in (0.3, 1.0, 5.0):
        assert gaussian_cdf(x) + gaussian_cdf(-x) == pytest.approx(1.0, abs=1e-15)
    lo = 1 - (2 * math.pi) ** -0.5 / 3 * math.exp(-4.5)
    assert lo < gaussian_cdf(3.0) < 1


# -- config --------------------------------------------------------------------


def test_wave_config_validation():
    assert WaveConfig(m=40, tau=0.25).n == 10
    with pytest.raises(ConfigError) as e:
        WaveConfig(m=7, tau=0.3)
    assert e.value.key == "tau"
    with pytest.raises(ConfigError):
        WaveConfig(m=40, tau=0.25, n=11)
    with pytest.raises(ConfigError) as e:
        WaveConfig(m=16, tau=1.0, variant="thm-other")
    assert e.value.key == "variant"


# -- harmonic conjugate ----------------------------------------------------------


def test_harmonic_conjugate_examples():
    z = 1.3 * np.exp(1j * TH)
    h = HarmonicField(CircleSeries(np.array([0.5, 0, 0.5], dtype=complex)))
    assert np.allclose(h(z).real, (1 / z).real)
    assert np.allclose(harmonic_conjugate(h)(z), (1 / z).imag)
    c = HarmonicField(CircleSeries(np.array([0, 2.0, 0], dtype=complex)))
    assert np.allclose(harmonic_conjugate(c)(z), 0.0)
    with pytest.raises(UsageError):
        harmonic_conjugate(HarmonicField(CircleSeries(np.array([1.0 + 0j])), log_coeff=1.0))


# -- predictions ---------------------------------------------------------------


def test_predict_P_ginibre_exact(gin):
    cfg, sol = _solve(gin, 16, 1.0)
    z = np.array([1.2])
    ratio = predict_P(gin, sol, cfg, z) / exact_ginibre_P(16, 16, z)
    assert abs(ratio[0] - 1) < 0.03


def test_variants_coincide_for_unit_ginibre(gin):
    cfg, sol = _solve(gin, 16, 1.0)
    cfg8 = WaveConfig(m=16, tau=1.0, variant="section-8")
    z = gin.psi(1.05 * np.exp(1j * TH))
    assert np.allclose(predict_P(gin, sol, cfg, z), predict_P(gin, sol, cfg8, z), rtol=1e-14)


def test_ginibre_quarter_variants(gin_quarter):
    errs = []
    for m in (16, 64):
        cfg, sol = _solve(gin_quarter, m, 0.25)
        cfg8 = WaveConfig(m=m, tau=0.25, variant="section-8")
        z = np.array([0.55])
        exact = exact_ginibre_P(m, m // 4, z)[0]
        errs.append(abs(predict_P(gin_quarter, sol, cfg, z)[0] / exact - 1))
        r8 = predict_P(gin_quarter, sol, cfg8, z)[0] / predict_P(gin_quarter, sol, cfg, z)[0]
        assert r8 == pytest.approx(0.25**-0.25, rel=1e-12)
    assert errs[1] < errs[0] < 0.03


@pytest.mark.parametrize("which,m,tau", [("gin", 16, 1.0), ("ell", 40, 0.25)])
def test_wave_identity(which, m, tau, request):
    geom = request.getfixturevalue(which)
    cfg, sol = _solve(geom, m, tau)
    zeta = np.concatenate([r * np.exp(1j * TH) for r in (0.98, 1.0, 1.05, 1.2)])
    z = geom.psi(zeta)
    w = predict_wave(geom, sol, cfg, z)
    P = predict_P(geom, sol, cfg, z)
    ref = np.abs(P) ** 2 * np.exp(-2 * m * geom.Q(z))
    assert np.allclose(w, ref, rtol=1e-9)


def test_leading_order_wave_on_gamma(gin):
    cfg, sol = _solve(gin, 100, 1.0, jet_order=0)
    w = predict_wave(gin, sol, cfg, np.exp(1j * TH))
    assert np.allclose(w, math.sqrt(100 / (2 * math.pi)), rtol=1e-10)
    assert w[0] == pytest.approx(3.9894, abs=1e-4)


def test_wave_gaussian_decay(gin):
    m = 16
    cfg, sol = _solve(gin, m, 1.0)
    r = np.array([1.05, 1.1, 1.2])
    w = predict_wave(gin, sol, cfg, r.astype(complex))
    V2 = gin.V2_exact(r.astype(complex))
    assert np.allclose(np.diff(np.log(w)), -2 * m * np.diff(V2), rtol=0.05)


def test_predict_outside_chart(ell):
    cfg, sol = _solve(ell, 40, 0.25)
    with pytest.raises(DomainError):
        predict_P(ell, sol, cfg, np.array([0.0]))


# -- approximate potential -------------------------------------------------------


def test_potential_U_structure(gin):
    m = 36
    cfg, sol = _solve(gin, m, 1.0)
    fs = build_potential_U(gin, sol, cfg, np.array([0.5, 0.3j]))
    assert np.all(fs.U == 0)
    on = build_potential_U(gin, sol, cfg, np.exp(1j * TH))
    assert np.allclose(on.U, on.H / 2 + on.G / math.sqrt(2 * math.pi * m), atol=1e-12)
    far = build_potential_U(gin, sol, cfg, np.array([10.0, 20.0, 40.0]))
    excess = far.U - np.log(np.array([10.0, 20.0, 40.0]) ** 2)
    assert np.all(np.abs(excess) < 1.0)
    assert np.ptp(excess) < 1e-6


def test_potential_equation_m64(gin):
    cfg, sol = _solve(gin, 64, 1.0)
    rep = check_potential_equation(gin, sol, cfg)
    assert not rep.inconclusive
    assert rep.residual <= 5e-2


def test_potential_residual_decreases(gin):
    res = []
    for m in (36, 64, 100):
        cfg, sol = _solve(gin, m, 1.0)
        res.append(check_potential_equation(gin, sol, cfg).residual)
    assert res[0] > res[1] > res[2]


def test_transition_band_is_gaussian_small(gin):
    ratios = []
    for m in (16, 36, 64):
        cfg, sol = _solve(gin, m, 1.0)
        ratios.append(check_potential_equation(gin, sol, cfg).outer_ratio)
    # |Lap U| e^{2mV^2} stays O(1) across m on the cut-off bands
    assert max(ratios) < 10 * math.sqrt(64)
