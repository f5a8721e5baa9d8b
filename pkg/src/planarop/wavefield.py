"""Predictions assembled from the engine output.

Physical points z are pulled back to the exterior-disk coordinate
zeta = phi(z); fields near Gamma are realized from series, everything else
(h, H far away, the phase) from finite Laurent sums in zeta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .engine import HarmonicField, coeffs_via_jets, h_approx
from .errors import ConfigError, UsageError
from .geometry import invert_map
from .series_core import diag_restrict

__all__ = [
    "WaveConfig",
    "WaveSolution",
    "FieldSample",
    "PotentialCheck",
    "gaussian_cdf",
    "harmonic_conjugate",
    "solve_wave",
    "predict_P",
    "predict_wave",
    "build_potential_U",
    "check_potential_equation",
    "smoothstep",
]

VARIANTS = ("thm-main", "section-8")


def gaussian_cdf(x):
    """(2 pi)^{-1/2} int_{-inf}^x exp(-t^2/2) dt."""
    return ndtr(x)


def smoothstep(x):
    """Quintic 0 -> 1 ramp with two vanishing derivatives at both ends."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10 - 15 * x + 6 * x * x)


@dataclass
class WaveConfig:
    """m, n = tau m, the prediction variant and the cut-off bands.

    Bands are (a, b) pairs in |log|zeta||: chi_1 is 1 up to a and 0 beyond b,
    separately on the inner and outer side of Gamma.
    """

    m: int
    tau: float
    n: int | None = None
    variant: str = "thm-main"
    jet_order: int = 2
    sigma_star: float = 0.2
    chi_inner: tuple | None = None
    chi_outer: tuple | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m", "m must be a positive integer")
        n = round(self.tau * self.m)
        if abs(self.tau * self.m - n) > 1e-9 or n < 1:
            raise ConfigError("tau", f"tau*m = {self.tau * self.m!r} is not a positive integer")
        if self.n is not None and self.n != n:
            raise ConfigError("n", f"n must equal tau*m = {n}")
        self.n = int(n)
        if self.variant not in VARIANTS:
            raise ConfigError("variant", f"variant must be one of {VARIANTS}")
        default = (self.sigma_star / 3, self.sigma_star / 2)
        self.chi_inner = tuple(self.chi_inner or default)
        self.chi_outer = tuple(self.chi_outer or default)
        for name, (a, b) in (("chi_inner", self.chi_inner), ("chi_outer", self.chi_outer)):
            if not 0 < a < b:
                raise ConfigError(name, "cut-off band needs 0 < a < b")

    @property
    def theta(self):
        return 1.0 / self.m

    def chi1(self, zeta):
        ell = np.log(np.abs(zeta))
        a = np.where(ell < 0, self.chi_inner[0], self.chi_outer[0])
        b = np.where(ell < 0, self.chi_inner[1], self.chi_outer[1])
        return 1.0 - smoothstep((np.abs(ell) - a) / (b - a))

    def chi2(self, zeta):
        return np.where(np.abs(zeta) >= 1.0, 1.0, self.chi1(zeta))


@dataclass
class Holomorphic:
    """g = h + i h* as a Laurent polynomial in zeta."""

    laurent: object

    def __call__(self, zeta):
        return np.imag(self.laurent(np.asarray(zeta, dtype=complex)))


def harmonic_conjugate(h):
    """Harmonic conjugate of a real bounded harmonic field, zero at infinity."""
    if getattr(h, "log_coeff", 0.0):
        raise UsageError("h has a log|zeta| component; no single-valued conjugate")
    from .geometry import holomorphic_extension

    return Holomorphic(holomorphic_extension(h.data))


@dataclass
class WaveSolution:
    """Engine output specialized to theta = 1/m."""

    geom: object
    cfg: WaveConfig
    table: object
    h: HarmonicField
    hstar: Holomorphic
    E: object
    PE: HarmonicField
    H: object
    G: object


def solve_wave(geom, cfg, tol=1e-9):
    """Jets up to ``cfg.jet_order``; h, E summed at theta = 1/m."""
    K = cfg.jet_order
    table = coeffs_via_jets(geom, K, k=K, tol=tol)
    th = cfg.theta
    hdata = table.hhat[0].data * 1.0
    E = table.Ehat[0]
    for j in range(1, K + 1):
        hdata = hdata + table.hhat[j].data * th**j
        E = E + table.Ehat[j] * th**j
    hdata = _realify(hdata)
    h = HarmonicField(hdata)
    _, H, G = h_approx(geom, th, E, tol)
    PE = HarmonicField(_realify(diag_restrict(E)))
    return WaveSolution(geom, cfg, table, h, harmonic_conjugate(h), E, PE, H, G)


def _realify(c):
    """Symmetrize circle data so that the realized function is exactly real."""
    D = c.degree
    a = c.coeffs.copy()
    a = 0.5 * (a + np.conj(a[:, ::-1]))
    return type(c)(a, c.ring, c.tail) if D >= 0 else c


def _pull(geom, z):
    z = np.asarray(z, dtype=complex)
    return z, invert_map(geom, z)


def predict_P(geom, sol, cfg, z):
    """chi_2 m^{1/4} phi^n exp(h + i h* + m scrQ), times (phi')^{1/2} for section-8."""
    z, zeta = _pull(geom, z)
    chi = cfg.chi2(zeta)
    out = np.zeros(zeta.shape, dtype=complex)
    on = chi > 0
    ze = zeta[on]
    expo = sol.hstar.laurent(ze) + cfg.m * geom.scrQ(ze)
    val = cfg.m**0.25 * ze**cfg.n * np.exp(expo)
    if cfg.variant == "section-8":
        val = val * np.sqrt(geom.phiprime_exact(ze))
    out[on] = chi[on] * val
    return out


def predict_wave(geom, sol, cfg, z):
    """sqrt(m) exp(2h - 2mV^2)."""
    z, zeta = _pull(geom, z)
    return _wave(geom, sol, cfg, z, zeta)


def _wave(geom, sol, cfg, z, zeta):
    V2 = geom.V2_exact(z, zeta)
    return math.sqrt(cfg.m) * np.exp(2 * sol.h(zeta).real - 2 * cfg.m * V2)


@dataclass
class FieldSample:
    z: np.ndarray
    zeta: np.ndarray
    V: np.ndarray
    h: np.ndarray
    hstar: np.ndarray
    H: np.ndarray
    G: np.ndarray
    U: np.ndarray
    P: np.ndarray
    wave: np.ndarray

    def rows(self):
        for i in np.ndindex(self.z.shape):
            yield (self.z[i].real, self.z[i].imag, self.V[i], self.h[i], self.hstar[i], self.wave[i],
                   self.P[i].real, self.P[i].imag, self.U[i])


def _V(geom, cfg, z, zeta):
    """Series value in the cut-off band (the closed form loses digits at Gamma)."""
    V = np.asarray(geom.V_exact(z, zeta), dtype=float)
    near = cfg.chi1(zeta) > 0
    if np.any(near):
        V = V.copy()
        V[near] = geom.V.realize(zeta[near]).real
    return V


def _U(geom, sol, cfg, z, zeta, full=False):
    m = cfg.m
    V = _V(geom, cfg, z, zeta)
    H = (np.log(np.abs(zeta) ** 2) + cfg.theta * sol.PE(zeta)).real
    c1 = cfg.chi1(zeta)
    c2 = cfg.chi2(zeta)
    G = np.zeros(z.shape)
    near = c1 > 0
    if np.any(near):
        G[near] = sol.G.realize(zeta[near]).real
    gauss = np.exp(-2 * m * V * V)
    U = c1 * (H * gaussian_cdf(2 * math.sqrt(m) * V) + G / math.sqrt(2 * math.pi * m) * gauss) + (c2 - c1) * H
    if full:
        return U, V, H, G
    return U


def build_potential_U(geom, sol, cfg, z):
    """Evaluate the approximate potential and all its ingredients at z."""
    z, zeta = _pull(geom, z)
    U, V, H, G = _U(geom, sol, cfg, z, zeta, full=True)
    h = sol.h(zeta).real
    hs = sol.hstar(zeta)
    P = predict_P(geom, sol, cfg, z)
    wave = _wave(geom, sol, cfg, z, zeta)
    return FieldSample(z, zeta, V, h, hs, H, G, U, P, wave)


@dataclass
class PotentialCheck:
    residual: float
    fd_error: float
    step: float
    inconclusive: bool
    points: int
    outer_ratio: float

    def text(self):
        return (f"relative_residual = {self.residual!r}\nfd_error = {self.fd_error!r}\nstep = {self.step!r}\n"
                f"inconclusive = {self.inconclusive}\npoints = {self.points}\n"
                f"outer_ratio = {self.outer_ratio!r}\n")


def _lap(f, z, h):
    return (f(z + h) + f(z - h) + f(z + 1j * h) + f(z - 1j * h) - 4 * f(z)) / (4 * h * h)


def check_potential_equation(geom, sol, cfg, n_theta=24, n_r=5, step=None):
    """Richardson-extrapolated 5-point quarter Laplacian of U on N'.

    Reports max |Lap U - sqrt(m) e^{2h-2mV^2}| / (sqrt(m) e^{2h-2mV^2}) over
    a polar grid inside N' (two Richardson levels), and max |Lap U| e^{2mV^2} on the transition bands
    (``outer_ratio``).
    """
    a_in, b_in = cfg.chi_inner
    a_out, b_out = cfg.chi_outer
    rim = geom.psi(math.exp(b_out) * np.exp(2j * np.pi * np.arange(256) / 256))
    diam = float(np.max(np.abs(rim[:, None] - rim[None, :])))
    h = 1e-3 * diam if step is None else step

    def U(zz):
        zz, ze = _pull(geom, zz)
        return _U(geom, sol, cfg, zz, ze)

    th = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    ell = np.linspace(-0.9 * a_in, 0.9 * a_out, n_r)
    zeta = np.multiply.outer(np.exp(ell), np.exp(1j * th))
    z = geom.psi(zeta)
    L1, L2, L3 = (_lap(U, z, h / k) for k in (1, 2, 4))
    R1, R2 = (4 * L2 - L1) / 3, (4 * L3 - L2) / 3
    lap = (16 * R2 - R1) / 15
    target = _wave(geom, sol, cfg, z, zeta)
    err_fd = float(np.max(np.abs(R2 - R1) / target)) / 15
    res = float(np.max(np.abs(lap - target) / target))
    ell_t = np.concatenate([np.linspace(-b_in, -a_in, n_r), np.linspace(a_out, b_out, n_r)])
    zt = geom.psi(np.multiply.outer(np.exp(ell_t), np.exp(1j * th)))
    lt = (4 * _lap(U, zt, h / 2) - _lap(U, zt, h)) / 3
    V2t = geom.V2_exact(zt, np.multiply.outer(np.exp(ell_t), np.exp(1j * th)))
    outer = float(np.max(np.abs(lt) * np.exp(2 * cfg.m * V2t)))
    return PotentialCheck(res, err_fd, h, err_fd > res, z.size, outer)
