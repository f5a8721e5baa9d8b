"""Droplet data for a potential Q and a mass parameter tau.

Everything is pulled back to the exterior disk by psi = phi^{-1} and stored as
slice-basis series in (zeta, eta); see :mod:`planarop.series_core`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, GeometryError, UsageError
from .series_core import (
    Band,
    CircleSeries,
    HermitianSeries,
    Laurent,
    ScalarRing,
    analytic_apply,
    diag_divide,
    diag_restrict,
    differentiate,
    hermitian_transpose,
)

__all__ = [
    "PotentialSpec",
    "DropletGeometry",
    "ValidationReport",
    "build_geometry",
    "holomorphic_extension",
    "compute_L",
    "validate_droplet",
    "invert_map",
    "elliptic_axes",
]


@dataclass(frozen=True)
class PotentialSpec:
    """Potential Q(z) = sum q_ab z^a conj(z)^b plus the exterior map psi.

    For ``ginibre`` and ``elliptic`` the tables are filled in by
    :func:`build_geometry`; ``custom`` must provide both.  The elliptic family
    is Q = |z|^2/2 + (t/2) Re z^2 with |t| < 1.
    """

    kind: str = "ginibre"
    t: float = 0.0
    q_coeffs: tuple = ()  # ((a, b, value), ...)
    psi_coeffs: tuple = ()  # ((k, value), ...), k <= 1

    def __post_init__(self):
        if self.kind not in ("ginibre", "elliptic", "custom"):
            raise ConfigError("potential", f"unknown potential {self.kind!r}")
        if self.kind == "elliptic" and not abs(self.t) < 1:
            raise ConfigError("t", "elliptic potential needs |t| < 1 (growth condition)")
        if self.kind == "custom":
            if not self.q_coeffs or not self.psi_coeffs:
                raise ConfigError("custom_q", "custom potential needs q and psi tables")
            tab = self.table()
            for (a, b), v in tab.items():
                if abs(tab.get((b, a), 0) - np.conj(v)) > 1e-12 * (1 + abs(v)):
                    raise ConfigError("custom_q", f"table not Hermitian at ({a},{b})")
            if any(k > 1 for k, _ in self.psi_coeffs):
                raise ConfigError("custom_psi", "psi powers must be <= 1")
            lead = dict(self.psi_coeffs).get(1, 0)
            if not (abs(complex(lead).imag) < 1e-14 and complex(lead).real > 0):
                raise ConfigError("custom_psi", "psi_1 must be real and positive")
            if not self._confining():
                raise ConfigError("custom_q", "Q fails the growth condition")

    def table(self):
        if self.kind == "ginibre":
            return {(1, 1): 0.5}
        if self.kind == "elliptic":
            return {(1, 1): 0.5, (2, 0): self.t / 4, (0, 2): self.t / 4}
        out = {}
        for a, b, v in self.q_coeffs:
            out[(int(a), int(b))] = out.get((int(a), int(b)), 0) + complex(v)
        return out

    def Q(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape)
        for (a, b), v in self.table().items():
            out = out + (v * z**a * np.conj(z) ** b).real
        return out

    def _confining(self):
        th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        vals = [float(np.min(self.Q(r * np.exp(1j * th)))) - 2 * math.log(r) for r in (1e2, 1e3)]
        return vals[1] > vals[0] > 0


def elliptic_axes(t, tau):
    """Semi-axes (A along x, B along y) of the elliptic droplet."""
    A = math.sqrt(tau * (1 - t) / (1 + t))
    B = math.sqrt(tau * (1 + t) / (1 - t))
    return A, B


def _default_psi(spec, tau):
    if spec.kind == "ginibre":
        return {1: math.sqrt(tau)}
    if spec.kind == "elliptic":
        A, B = elliptic_axes(spec.t, tau)
        return {1: (A + B) / 2, -1: (A - B) / 2}
    return {int(k): complex(v) for k, v in spec.psi_coeffs}


def holomorphic_extension(boundary):
    """g = b_0 + 2 sum_{d>=1} b_{-d} zeta^{-d}: Re g = boundary, Im g(inf) = 0."""
    if not boundary.is_real(1e-10):
        raise UsageError("holomorphic_extension needs real boundary data")
    if boundary.ring.size != 1:
        raise UsageError("holomorphic_extension works on scalar circle data")
    D = boundary.degree
    c = boundary.coeffs[0]
    # round-off coefficients are dropped: zeta^{-d} carries (1-u)^{-d/2}, whose
    # radial coefficients grow like p^{d/2-1}, so stray 1e-17 terms at large d
    # turn into visible noise at high radial order
    floor = 8 * np.finfo(float).eps * float(np.abs(c).sum())
    coeffs = {0: complex(c[D]).real}
    for d in range(1, D + 1):
        v = complex(c[D - d])
        if abs(v) > floor:
            coeffs[-d] = 2 * v
    return Laurent(coeffs)


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)  # (name, passed, margin, detail)

    def add(self, name, passed, margin, detail=""):
        self.checks.append((name, bool(passed), float(margin), detail))

    @property
    def ok(self):
        return all(c[1] for c in self.checks)

    def failures(self):
        return [c[0] for c in self.checks if not c[1]]

    def text(self):
        lines = [f"{n} = {'pass' if p else 'FAIL'} margin={m:.6e} {d}".rstrip() for n, p, m, d in self.checks]
        lines.append(f"all = {'pass' if self.ok else 'FAIL'}")
        return "\n".join(lines) + "\n"


class DropletGeometry:
    """Pulled-back droplet data; series live on the complex-double ring.

    ``lift(name, ring)`` returns any stored series embedded in a jet ring.
    """

    def __init__(self, spec, tau, N, R, psi, work_sigma=0.2):
        self.spec = spec
        self.tau = float(tau)
        self.N = int(N)
        self.R = int(R)
        self.psi = Laurent(psi)
        self.dpsi = self.psi.deriv()
        self.work_band = Band(work_sigma)
        self._lifted = {}
        self._build()

    # -- construction ---------------------------------------------------------
    def _build(self):
        N, R = self.N, self.R
        Psi = self.psi.hermitian(N, R)
        PsiT = hermitian_transpose(Psi)
        Qpol = None
        for (a, b), v in self.spec.table().items():
            term = HermitianSeries.constant(v, N, R)
            for _ in range(a):
                term = term * Psi
            for _ in range(b):
                term = term * PsiT
            Qpol = term if Qpol is None else Qpol + term
        self.Qpol = Qpol
        self.scrQ = holomorphic_extension(diag_restrict(Qpol).jet(0))
        S = self.scrQ.hermitian(N, R)
        self.logs = HermitianSeries.radial([0.0] + [-1.0 / i for i in range(1, R + 1)], N, R)
        self.V2 = Qpol - self.logs * (self.tau / 2) - (S + hermitian_transpose(S)) * 0.5
        self.u = HermitianSeries.u(N, R)
        self.V = None

    def _finish(self):
        N, R = self.N, self.R
        W2 = diag_divide(diag_divide(self.V2, tol=1e-7), tol=1e-7)
        self.W = analytic_apply("sqrt", W2)
        self.V = self.u * self.W * -1.0
        self.unit = analytic_apply("reciprocal", self.W) * -1.0  # (1 - zeta eta)/V
        self.phiprime = analytic_apply("reciprocal", self.dpsi.hermitian(N, R))
        self.phiprimeT = hermitian_transpose(self.phiprime)
        self.absphip2 = self.phiprime * self.phiprimeT
        self.dV = self.d(self.V)
        self.dVbar = hermitian_transpose(self.dV)
        self.absdV2 = self.dV * self.dVbar
        self.lapV = self.laplacian(self.V)
        self.logphi_over_V = diag_divide(self.logs) * self.unit * 0.5
        self.L0 = self.absdV2 * self.logphi_over_V * 2.0
        self.L1 = self.laplacian(self.logphi_over_V) * 0.5
        self.inv_4absdV2 = analytic_apply("reciprocal", self.absdV2 * 4.0)

    # -- differential operators (chain rule through phi) ----------------------
    def d(self, f):
        return self.lift("phiprime", f.ring) * differentiate(f, "zeta")

    def dbar(self, f):
        return self.lift("phiprimeT", f.ring) * differentiate(f, "eta")

    def laplacian(self, f):
        """Quarter Laplacian: |phi'|^2 d_zeta d_eta."""
        return self.lift("absphip2", f.ring) * differentiate(differentiate(f, "zeta"), "eta")

    def lift(self, name, ring):
        base = getattr(self, name)
        if ring is None or ring == base.ring:
            return base
        key = (name, ring)
        if key not in self._lifted:
            a = ring.zeros(base.a.shape[1:])
            a[0] = base.a[0]
            self._lifted[key] = HermitianSeries(a, ring, base.valid, base.tail)
        return self._lifted[key]

    # -- pointwise realizations ---------------------------------------------
    def Q(self, z):
        return self.spec.Q(z)

    def phi(self, z):
        return invert_map(self, z)

    def Qbreve_zeta(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        return self.tau * np.log(np.abs(zeta)) + self.scrQ(zeta).real

    def V2_exact(self, z, zeta=None):
        zeta = self.phi(z) if zeta is None else zeta
        return self.Q(z) - self.Qbreve_zeta(zeta)

    def V_exact(self, z, zeta=None):
        """Signed root of Q - Qbreve, positive outside the droplet."""
        zeta = self.phi(z) if zeta is None else np.asarray(zeta, dtype=complex)
        v2 = self.V2_exact(z, zeta)
        return np.sign(np.abs(zeta) - 1.0) * np.sqrt(np.maximum(v2, 0.0))

    def phiprime_exact(self, zeta):
        return 1.0 / self.dpsi(zeta)

    @property
    def chart_radius(self):
        """Smallest |zeta| where psi is still used: 5% above the critical points of psi."""
        low = min(self.psi.coeffs)
        if low >= 0:
            return 0.0
        # zeta^(1-low) psi'(zeta) is a polynomial of degree 1 - low
        poly = np.zeros(2 - low, dtype=complex)
        for k, c in self.psi.coeffs.items():
            if k != 0:
                poly[1 - k] += k * c  # coefficient of zeta^(k - low), highest degree first
        crit = np.roots(poly)
        return 1.05 * float(np.max(np.abs(crit))) if crit.size else 0.0


def build_geometry(spec, tau, N=24, R=None, validate=True, work_sigma=0.2):
    """Construct and (by default) validate the droplet geometry."""
    if not 0 < tau <= 1:
        raise ConfigError("tau", "tau must lie in (0, 1]")
    if N < 1:
        raise ConfigError("N", "series order must be >= 1")
    R = 2 * N if R is None else int(R)
    if R < 12:
        raise ConfigError("R", "radial order must be >= 12")
    geom = DropletGeometry(spec, tau, N, R, _default_psi(spec, tau), work_sigma)
    first = _vanishing(geom)
    if first[0] and first[1]:
        geom._finish()
    if validate:
        rep = validate_droplet(geom)
        if not rep.ok:
            raise GeometryError("droplet validation failed: " + ", ".join(rep.failures()))
        geom.report = rep
    return geom


def _vanishing(geom):
    V2 = geom.V2
    scale = max(float(np.abs(V2.a[0, :, 2]).max()), 1e-300)
    b0 = float(np.abs(V2.a[0, :, 0]).max())
    b1 = float(np.abs(V2.a[0, :, 1]).max())
    tol = 1e-9 * scale
    return b0 <= tol, b1 <= tol, b0 / scale, b1 / scale


def compute_L(geom, theta):
    """L = 2|dV|^2 log|phi|/V + (theta/2) Lap(log|phi|/V).

    ``theta`` is a number or a theta-jet ring (then theta is the generator).
    """
    if isinstance(theta, ScalarRing):
        if theta.kind != "theta-jet":
            raise UsageError("ring-valued theta must be a theta-jet ring")
        L = geom.lift("L0", theta) + geom.lift("L1", theta).theta_shift()
        return L
    return geom.L0 + geom.L1 * theta


def validate_droplet(geom, n_theta=96, n_r=12):
    """Checks: second-order vanishing of V^2, Q >= Qbreve near Gamma,
    psi' bounded away from 0, |dV|^2 > 0 on Gamma, realized sign of V."""
    rep = ValidationReport()
    v0, v1, m0, m1 = _vanishing(geom)
    rep.add("vanishing_V2", v0 and v1, max(m0, m1), f"(orders 0,1: {m0:.2e}, {m1:.2e})")
    band = geom.work_band
    th = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    radii = np.concatenate([np.linspace(band.rho, 0.995, n_r), np.linspace(1.005, band.lam, n_r)])
    radii = radii[radii > geom.chart_radius * 1.05]
    zeta = np.multiply.outer(radii, np.exp(1j * th))
    z = geom.psi(zeta)
    v2 = geom.Q(z) - geom.Qbreve_zeta(zeta)
    ratio = v2 / (np.abs(zeta) - 1.0) ** 2
    rep.add("obstacle_positive", float(ratio.min()) > 0, float(ratio.min()), "(min (Q-Qbreve)/(|zeta|-1)^2)")
    dmin = float(np.min(np.abs(geom.dpsi(zeta))))
    rep.add("psi_univalent", dmin > 0, dmin, "(min |psi'|)")
    if geom.V is None:
        rep.add("dV_nonvanishing", False, 0.0, "(V not constructed)")
        rep.add("V_sign", False, 0.0, "(V not constructed)")
        return rep
    g = geom.absdV2.realize(np.exp(1j * th)).real
    rep.add("dV_nonvanishing", float(g.min()) > 0, float(g.min()), "(min |dV|^2 on Gamma)")
    out = geom.V.realize(1.05 * np.exp(1j * th)).real
    inn = geom.V.realize(0.95 * np.exp(1j * th)).real
    rep.add("V_sign", out.min() > 0 and inn.max() < 0, min(out.min(), -inn.max()), "(V>0 outside, <0 inside)")
    return rep


def invert_map(geom, z, tol=1e-12, steps=50, strict=True):
    """Solve psi(zeta) = z by Newton's method from z/psi_1 (vectorized).

    With ``strict=False`` points outside the chart come back as nan instead
    of raising.
    """
    z = np.asarray(z, dtype=complex)
    psi, dpsi = geom.psi, geom.dpsi
    c1 = geom.psi.coeffs[1]
    zeta = z / c1
    # a better start near the droplet: pick the exterior root for a + b/zeta
    if -1 in psi.coeffs and len(psi.coeffs) <= 3:
        b = psi.coeffs[-1]
        a0 = psi.coeffs.get(0, 0)
        w = z - a0
        disc = np.sqrt(w * w - 4 * c1 * b + 0j)
        r1 = (w + disc) / (2 * c1)
        r2 = (w - disc) / (2 * c1)
        zeta = np.where(np.abs(r1) >= np.abs(r2), r1, r2)
    for _ in range(steps):
        res = psi(zeta) - z
        if np.all(np.abs(res) <= tol * (1 + np.abs(z))):
            break
        zeta = zeta - res / dpsi(zeta)
    res = np.abs(psi(zeta) - z)
    bad = ~(res <= tol * (1 + np.abs(z))) | (np.abs(zeta) < geom.chart_radius)
    if np.any(bad):
        if strict:
            raise DomainError("invert_map: point outside the chart of psi")
        zeta = np.where(bad, np.nan + 0j, zeta)
    return zeta
