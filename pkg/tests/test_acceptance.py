"""Acceptance criteria A1-A10; each test records one pass/fail line."""

import math
import time

import numpy as np
from scipy.special import gammaln

import test_series_core as props
from planarop.engine import (
    EngineParams,
    closed_form_coefficients,
    coeffs_via_jets,
    iterate,
    lipschitz_budget,
    sampled_norm,
    taylor_remainder_bound,
)
from planarop.geometry import PotentialSpec, build_geometry, compute_L, elliptic_axes
from planarop.oracle import (
    berezin_report,
    berezin_zeros,
    compare_prediction,
    predicted_orthogonality,
    verify_berezin_system,
)
from planarop.series_core import Band, diag_restrict
from planarop.wavefield import WaveConfig, check_potential_equation, predict_wave, solve_wave

TH = np.linspace(0, 2 * np.pi, 16, endpoint=False)


def test_A1_ginibre_end_to_end(record):
    t0 = time.time()
    geom = build_geometry(PotentialSpec("ginibre"), 1.0)
    z = np.concatenate([r * np.exp(1j * TH) for r in (1.05, 1.2)])
    ms, errs = (16, 36, 64), []
    for m in ms:
        cfg = WaveConfig(m=m, tau=1.0, jet_order=2)
        w = predict_wave(geom, solve_wave(geom, cfg), cfg, z)
        exact = np.exp((m + 1) * math.log(m) + 2 * m * np.log(np.abs(z)) - m * np.abs(z) ** 2 - gammaln(m + 1))
        errs.append(float(np.max(np.abs(w / exact - 1))))
    slope = np.polyfit(np.log(ms), np.log(errs), 1)[0]
    dt = time.time() - t0
    ok = errs[-1] <= 0.05 and errs[0] > errs[1] > errs[2] and slope <= -0.9 and dt <= 60
    record("A1", ok, f"errors {errs[0]:.2e} {errs[1]:.2e} {errs[2]:.2e} slope {slope:.2f} ({dt:.1f}s)")
    assert ok


def test_A2_closed_form_constants(record):
    th = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    dev = 0.0
    for tau in (1.0, 0.25):
        g = build_geometry(PotentialSpec("ginibre"), tau)
        L0 = diag_restrict(compute_L(g, 0.0))(th)
        dev = max(dev, float(np.max(np.abs(L0 - 1 / (2 * math.sqrt(tau))))))
    g = build_geometry(PotentialSpec("ginibre"), 1.0, N=8, R=40)
    h0 = complex(coeffs_via_jets(g, 0).hhat[0].data.mode(0)).real
    dh = abs(h0 + 0.25 * math.log(2 * math.pi))
    ok = dev <= 1e-9 and dh <= 1e-9
    record("A2", ok, f"L0 deviation {dev:.1e}, h0 deviation {dh:.1e}")
    assert ok


def test_A3_coefficient_cross_check(record):
    t0 = time.time()
    zeta = np.concatenate([r * np.exp(1j * TH) for r in (0.97, 1.03)])
    worst = 0.0
    for spec in (PotentialSpec("ginibre"), PotentialSpec("elliptic", 0.3)):
        geom = build_geometry(spec, 1.0, N=48, R=40)
        jets = coeffs_via_jets(geom, 2)
        cf = closed_form_coefficients(geom)
        for j, key in ((0, "E0"), (1, "E1")):
            worst = max(worst, float(np.max(np.abs(jets.Ehat[j].realize(zeta) - cf[key].realize(zeta)))))
        for j in range(3):
            diff = jets.hhat[j].data(np.angle(zeta[:16])) - cf[f"h{j}"](np.angle(zeta[:16]))
            worst = max(worst, float(np.max(np.abs(diff))))
    dt = time.time() - t0
    ok = worst <= 1e-9 and dt <= 60
    record("A3", ok, f"max deviation {worst:.1e} ({dt:.1f}s)")
    assert ok


def test_A4_iteration_contraction(record):
    theta = 0.01
    geom = build_geometry(PotentialSpec("ginibre"), 1.0, N=24)
    table = iterate(geom, EngineParams(theta=theta))
    r = table.residuals
    halving = all(r[j + 1] <= 0.5 * r[j] for j in range(len(r) - 1))
    bd = lipschitz_budget(geom, 0.2, 0.1, theta)
    e0 = sampled_norm(table.E_iterates[0], Band(0.1))
    bound = all(rk <= (0.5 * bd.C2 * theta * k * k) ** k * e0 for k, rk in enumerate(r, start=1))
    ok = halving and bound and len(r) >= 2
    record("A4", ok, f"{len(r)} residuals {r[0]:.1e} -> {r[-1]:.1e}, stop={table.stop_reason}, C2={bd.C2:.1e}")
    assert ok


def test_A5_oracle_exactness(ginibre_oracle, record):
    m, G = 10, ginibre_oracle.gram
    worst = 0.0
    for j in range(9):
        for k in range(9):
            exact = math.factorial(j) / m ** (j + 1) if j == k else 0.0
            scale = math.sqrt(math.factorial(j) / m ** (j + 1) * math.factorial(k) / m ** (k + 1))
            worst = max(worst, abs(complex(G[j, k]) - exact) / scale)
    dk = abs(float(ginibre_oracle.kappa[2] ** 2) * m**3 / 2 - 1)
    ok = worst <= 1e-12 and dk <= 1e-10
    record("A5", ok, f"moment deviation {worst:.1e}, kappa2 deviation {dk:.1e}")
    assert ok


def test_A6_elliptic_validation(elliptic_case, record):
    geom, basis = elliptic_case
    cfg = WaveConfig(m=40, tau=0.25)
    sol = solve_wave(geom, cfg)
    wave = compare_prediction(basis, geom, sol, cfg)["sup_err_wave"]
    orth = predicted_orthogonality(basis, geom, sol, cfg)
    ok = basis.residual <= 1e-10 and wave <= 0.05 and orth["relative"] <= 1e-3
    record("A6", ok, f"orthonormality {basis.residual:.1e}, wave error {wave:.2e}, "
                     f"orthogonality {orth['relative']:.1e} (cosine {orth['cosine']:.1e})")
    assert ok


def test_A7_berezin_suite(berezin_case, record):
    basis, z, n = berezin_case
    rep = berezin_report(basis, z, n)
    sysr = verify_berezin_system(basis, z, n)
    A, B = elliptic_axes(0.3, 0.15)
    assert (z.real / A) ** 2 + (z.imag / B) ** 2 > 1  # off-spectral source
    roots = berezin_zeros(basis, z, n).roots
    inside = len(roots) == n - 1 and bool(np.all((roots.real / A) ** 2 + (roots.imag / B) ** 2 < 1))
    decay = max(sysr["decay"].values())
    ok = (abs(rep.mass - 1) <= 1e-8 and abs(sysr["q_norm"] - 1) <= 1e-8
          and decay <= sysr["decay_bound"] and inside)
    record("A7", ok, f"mass-1 {rep.mass - 1:.1e}, |q|-1 {sysr['q_norm'] - 1:.1e}, "
                     f"max |w||A| {decay:.2f}, {len(roots)} zeros inside={inside}")
    assert ok


def test_A8_potential_equation(record):
    geom = build_geometry(PotentialSpec("ginibre"), 1.0)
    res = []
    for m in (36, 64, 100):
        cfg = WaveConfig(m=m, tau=1.0)
        res.append(check_potential_equation(geom, solve_wave(geom, cfg), cfg).residual)
    ok = res[1] <= 5e-2 and res[0] > res[1] > res[2]
    record("A8", ok, "residuals " + " ".join(f"{r:.1e}" for r in res))
    assert ok


PROPERTY_TESTS = [
    props.test_multiply_commutes,
    props.test_multiply_associative_when_bands_fit,
    props.test_transpose_involution_and_intertwining,
    props.test_restrict_after_extend_is_identity,
    props.test_divide_then_multiply_recovers,
    props.test_majorant_submultiplicative,
    props.test_evaluation_consistency_after_operations,
    props.test_real_functions_are_hermitian,
    props.test_band_rho_in_unit_interval,
]


def test_A9_series_properties(record):
    t0 = time.time()
    failed = []
    for fn in PROPERTY_TESTS:
        try:
            fn()
        except Exception as exc:  # noqa: BLE001
            failed.append(f"{fn.__name__}: {exc!r}"[:120])
    dt = time.time() - t0
    ok = not failed and dt <= 30
    record("A9", ok, f"{len(PROPERTY_TESTS)} properties x 200 inputs, {len(failed)} failures ({dt:.1f}s)")
    assert ok, failed


def test_A10_truncation_bound(record):
    rng = np.random.default_rng(2024)
    grid = np.exp(2j * np.pi * np.arange(1 << 14) / (1 << 14))
    pts = 0.5 * np.exp(2j * np.pi * rng.uniform(size=64))
    worst, checked = 0.0, 0
    for i in range(20):
        if i % 2:  # geometric series 1/(1 - a z), sup = 1/(1 - |a|)
            a = 0.95 * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
            c = a ** np.arange(400)
            fnorm = 1 / (1 - abs(a))
        else:  # random polynomial, sup from a dense circle sample
            deg = int(rng.integers(4, 30))
            c = (rng.normal(size=deg + 1) + 1j * rng.normal(size=deg + 1)) * 0.8 ** np.arange(deg + 1)
            fnorm = float(np.max(np.abs(np.polyval(c[::-1], grid))))
        f = np.polyval(c[::-1], pts)
        for k in range(6):
            Pk = np.polyval(c[: k + 1][::-1], pts)
            ratio = np.max(np.abs(f - Pk)) / taylor_remainder_bound(0.5, k, fnorm)
            worst = max(worst, float(ratio))
            checked += 1
    ok = worst < 1.0
    record("A10", ok, f"{checked} (series, k) pairs, max measured/bound {worst:.3f}")
    assert ok

