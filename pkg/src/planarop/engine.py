"""Fixed-point machinery: operators S and T, iteration, theta-jets, budgets.

theta (= 1/m) is either a number, or a :class:`ScalarRing` of kind theta-jet,
in which case multiplication by theta is the jet shift and every result is a
truncated asymptotic expansion in theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IterationError, NumericalError, UsageError
from .geometry import compute_L
from .series_core import (
    Band,
    CircleSeries,
    HermitianSeries,
    ScalarRing,
    analytic_apply,
    diag_divide,
    diag_restrict,
    majorant_norm,
    poisson_extend,
)

__all__ = [
    "EngineParams",
    "ExpansionTable",
    "HarmonicField",
    "Budget",
    "op_S",
    "op_T",
    "op_P",
    "iterate",
    "coeffs_via_jets",
    "h_approx",
    "truncate_h",
    "taylor_remainder_bound",
    "lipschitz_budget",
    "k_cap",
    "closed_form_coefficients",
    "sampled_norm",
]

LOG_PI_2 = math.log(math.pi / 2)


@dataclass
class EngineParams:
    """Iteration settings.

    ``iterations`` is ``"auto"`` or an explicit count k (E_k = T^{k+1}[0]).
    The automatic cap is floor(eps_cap |theta|^{-1/2}); eps_cap = 2^{-1/2}
    corresponds to the smallest admissible C2 = 2.  ``residual_norm`` is
    ``"sampled"`` (sup over the physical slice of the band sigma*/2) or
    ``"majorant"`` (coefficient majorant on the same band).
    """

    theta: object = 0.0
    sigma_star: float = 0.2
    iterations: object = "auto"
    vanish_tol: float = 1e-9
    eps_cap: float = 2**-0.5
    residual_order: int = 6
    max_iterations: int = 40
    residual_norm: str = "sampled"

    def __post_init__(self):
        if self.residual_norm not in ("sampled", "majorant"):
            raise UsageError("residual_norm must be 'sampled' or 'majorant'")

    @property
    def ring(self):
        if isinstance(self.theta, ScalarRing):
            return self.theta
        return ScalarRing.double()

    @property
    def residual_band(self):
        return Band(self.sigma_star / 2)


@dataclass
class HarmonicField:
    """Bounded harmonic function on the exterior disk given by circle data."""

    data: CircleSeries
    log_coeff: float = 0.0

    def __call__(self, zeta):
        """Realized value at zeta (complex-double data); c log|zeta| included."""
        zeta = np.asarray(zeta, dtype=complex)
        D = self.data.degree
        c = self.data.coeffs[0]
        out = np.full(zeta.shape, c[D], dtype=complex)
        if self.log_coeff:
            out = out + self.log_coeff * np.log(np.abs(zeta))
        for d in range(1, D + 1):
            out = out + c[D - d] * zeta ** (-d) + c[D + d] * np.conj(zeta) ** (-d)
        return out

    def series(self, N, R):
        return poisson_extend(self.data, N, R)

    def jet(self, j):
        return HarmonicField(self.data.jet(j))


@dataclass
class ExpansionTable:
    E_iterates: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    tails: list = field(default_factory=list)
    Ehat: list = field(default_factory=list)
    hhat: list = field(default_factory=list)
    remainder_bounds: list = field(default_factory=list)
    stop_reason: str = ""
    theta: object = 0.0
    E_next: HermitianSeries | None = None
    residual_order: int = 0

    @property
    def E(self):
        return self.E_iterates[-1]

    @property
    def k(self):
        return len(self.E_iterates) - 1


# ---------------------------------------------------------------------------
# operators


def _times_theta(f, theta):
    if isinstance(theta, ScalarRing):
        return f.theta_shift()
    return f * theta


def _lift(geom, name, f):
    return geom.lift(name, f.ring)


def op_P(f):
    """Poisson extension of the diagonal restriction (harmonic part)."""
    return poisson_extend(diag_restrict(f), f.N, f.R).with_valid(f.valid)


def _PmI_over_V(geom, f, tol=1e-9):
    diff = op_P(f) - f
    try:
        q = diag_divide(diff, tol=tol)
    except DomainError as exc:
        raise NumericalError(f"(P-I)f does not vanish on Gamma: {exc}") from exc
    return q * _lift(geom, "unit", f)


def op_S(geom, theta, f, tol=1e-9):
    """S[f] = dV dbar f + dbarV d f + f LapV + |dV|^2 (P-I)f/V + (theta/4) Lap((P-I)f/V)."""
    q = _PmI_over_V(geom, f, tol)
    S = _lift(geom, "dV", f) * geom.dbar(f)
    S = S + _lift(geom, "dVbar", f) * geom.d(f)
    S = S + f * _lift(geom, "lapV", f)
    S = S + _lift(geom, "absdV2", f) * q
    return S + _times_theta(geom.laplacian(q), theta) * 0.25


def _argument(geom, theta, f, tol):
    L = compute_L(geom, theta)
    if f is None:
        return L
    if isinstance(theta, (int, float)) and theta == 0:
        return L
    return L + _times_theta(op_S(geom, theta, f, tol), theta)


def op_T(geom, theta, f=None, tol=1e-9):
    """T[f] = {X - exp(P log X)} / (4 V |dV|^2) with X = L + theta S[f]."""
    if f is not None and isinstance(theta, ScalarRing) and f.ring != theta:
        raise UsageError("f must live on the theta-jet ring")
    X = _argument(geom, theta, f, tol)
    b = diag_restrict(X)
    vals = b.jet(0)(np.linspace(0, 2 * np.pi, 64, endpoint=False))
    if np.min(vals.real) <= 0:
        raise NumericalError(f"L + theta S[f] is not positive on Gamma (min {np.min(vals.real):.3e})")
    logb = b.apply("log")
    expP = analytic_apply("exp", poisson_extend(logb, X.N, X.R).with_valid(X.valid))
    bracket = X - expP
    try:
        q = diag_divide(bracket, tol=tol)
    except DomainError as exc:
        raise NumericalError(f"T bracket does not vanish on Gamma: {exc}") from exc
    return q * _lift(geom, "unit", q) * _lift(geom, "inv_4absdV2", q)


# ---------------------------------------------------------------------------
# iteration


def sampled_norm(f, band, n_r=7):
    """sup |f| over rho <= |zeta| <= 1/rho on the slice eta = conj(zeta) (all jets)."""
    th = np.linspace(0, 2 * np.pi, 4 * f.N + 8, endpoint=False)
    r = np.exp(np.linspace(-band.sigma, band.sigma, n_r))
    return float(np.max(np.abs(f.realize(np.multiply.outer(r, np.exp(1j * th))))))


def _residual(params, f, band, order):
    if params.residual_norm == "majorant":
        return majorant_norm(f, band, max_order=order)
    return sampled_norm(f, band)


def k_cap(theta, C2):
    """floor(|theta|^{-1/2} C2^{-1/2})."""
    return int(math.floor(abs(theta) ** -0.5 * C2**-0.5 + 1e-12))


def _zero(geom, ring):
    return HermitianSeries.zero(geom.N, geom.R, ring)


def iterate(geom, params):
    """E_0 = T[0], E_{j+1} = T[E_j]; residual_j = ||E_j - E_{j+1}||.

    Stops at the requested count, after 3 consecutive non-improvements, at the
    cap, at the round-off floor (100 eps max(||E||, 1)), or when the trusted
    radial order runs out.  Residuals are majorants
    on the band sigma*/2 (sampled sup by default; the majorant variant keeps
    radial orders <= ``residual_order``).
    """
    theta = params.theta
    ring = params.ring
    if isinstance(params.iterations, int):
        cap = params.iterations
    else:
        if isinstance(theta, ScalarRing):
            cap = ring.order + 1
        elif theta == 0:
            cap = 1
        else:
            cap = max(1, int(math.floor(params.eps_cap * abs(theta) ** -0.5)))
    cap = min(cap, params.max_iterations)
    band = params.residual_band
    tol = params.vanish_tol
    E = op_T(geom, theta, None, tol)
    table = ExpansionTable(theta=theta)
    table.E_iterates.append(E)
    table.tails.append(E.tail)
    best = math.inf
    stale = 0
    reason = "cap"
    while True:
        k = len(table.E_iterates) - 1
        try:
            En = op_T(geom, theta, E, tol)
        except DomainError as exc:  # no radial order left
            reason = f"precision exhausted ({exc})"
            break
        order = min(params.residual_order, En.valid)
        r = _residual(params, E - En, band, order)
        table.residuals.append(r)
        table.E_next = En
        if r > 10 * best and not isinstance(theta, ScalarRing):
            raise IterationError(f"residual grew to {r:.3e} (best {best:.3e}) at k={k}")
        if r <= 100 * np.finfo(float).eps * max(_residual(params, E, band, order), 1.0):
            reason = "round-off floor"
            break
        if r < best:
            best, stale = r, 0
        else:
            stale += 1
            if stale >= 3:
                reason = "plateau"
                break
        if k >= cap:
            reason = "cap" if not isinstance(params.iterations, int) else "requested"
            break
        if En.valid < params.residual_order + 4:
            reason = "radial order exhausted"
            break
        E = En
        table.E_iterates.append(E)
        table.tails.append(E.tail)
    table.stop_reason = reason
    table.residual_order = min(params.residual_order, table.E_iterates[-1].valid)
    return table


def coeffs_via_jets(geom, K, k=None, tol=1e-9):
    """Run the iteration on the theta-jet ring of order K.

    After k >= K+1 applications of T the jets 0..K of E_k are exact, giving
    E-hat_j; h-hat_j are the jets of h computed from E_k.
    """
    k = K if k is None else k
    if k < K:
        raise UsageError("need k >= K iterations for stable jets")
    ring = ScalarRing.jets(K)
    if 4 * (k + 2) + 6 > geom.R:
        raise UsageError(f"jet run needs radial order > {4 * (k + 2) + 6}; raise R")
    params = EngineParams(theta=ring, iterations=k, vanish_tol=tol)
    table = iterate(geom, params)
    E = table.E
    table.Ehat = [E.jet(j) for j in range(K + 1)]
    h, _, _ = h_approx(geom, ring, E, tol)
    table.hhat = [h.jet(j) for j in range(K + 1)]
    return table


def h_approx(geom, theta, E, tol=1e-9):
    """h = P[log(L + theta S[E])]/2 - log(pi/2)/4, H = log|phi|^2 + theta P[E],
    G = (H - theta E)/(2V).  Returns (HarmonicField h, series H, series G)."""
    X = _argument(geom, theta, E, tol)
    b = diag_restrict(X)
    if np.min(b.jet(0)(np.linspace(0, 2 * np.pi, 64, endpoint=False)).real) <= 0:
        raise NumericalError("L + theta S[E] is not positive on Gamma")
    h = b.apply("log") * 0.5 + (-0.25 * LOG_PI_2)
    ring = E.ring
    logs = geom.lift("logs", ring)
    PE = op_P(E)
    H = logs + _times_theta(PE, theta)
    try:
        G = diag_divide(_times_theta(PE - E, theta) + logs, tol=tol) * geom.lift("unit", ring) * 0.5
    except DomainError as exc:
        raise NumericalError(f"H - theta E does not vanish on Gamma: {exc}") from exc
    return HarmonicField(h), H, G


def taylor_remainder_bound(z, k, fnorm):
    """|f(z) - P_k f(z)| <= |z|^{k+1} (1 + log(1/(1-|z|^2))/pi) ||f|| on the disk."""
    r = abs(z)
    if r >= 1:
        return math.inf
    return r ** (k + 1) * (1 + math.log(1 / (1 - r * r)) / math.pi) * fnorm


def truncate_h(hhat, kprime, theta, theta_max=None, fnorm=None):
    """Return (h-truncated circle data at ``theta``, remainder bound).

    The polynomial part sum_{j<=k'} theta^j h-hat_j is exact; when k' is below
    the available jet order K the lemma's bound is applied with
    z = theta/theta_max and ||f|| estimated by sum_j ||h-hat_j|| theta_max^j.
    """
    K = len(hhat) - 1
    if kprime > K:
        raise UsageError("truncation order exceeds the jet order")
    out = hhat[0].data * 1.0
    for j in range(1, kprime + 1):
        out = out + hhat[j].data * theta**j
    if kprime >= K:
        return HarmonicField(out), 0.0
    theta_max = theta_max or 2 * abs(theta)
    if fnorm is None:
        fnorm = sum(h.data.sup() * theta_max**j for j, h in enumerate(hhat))
    return HarmonicField(out), taylor_remainder_bound(abs(theta) / theta_max, kprime, fnorm)


# ---------------------------------------------------------------------------
# closed forms for the first coefficients


def closed_form_coefficients(geom, tol=1e-9):
    """E-hat_0, E-hat_1 and h-hat_0..2 evaluated from their explicit formulas."""
    L0, L1 = geom.L0, geom.L1

    def S0(f):
        q = _PmI_over_V(geom, f, tol)
        return geom.dV * geom.dbar(f) + geom.dVbar * geom.d(f) + f * geom.lapV + geom.absdV2 * q

    def S1(f):
        return geom.laplacian(_PmI_over_V(geom, f, tol)) * 0.25

    def divide(br):
        return diag_divide(br, tol=tol) * geom.unit * geom.inv_4absdV2

    bL0 = diag_restrict(L0)
    PlogL0 = poisson_extend(bL0.apply("log"), geom.N, geom.R)
    ePlogL0 = analytic_apply("exp", PlogL0)
    E0 = divide(L0 - ePlogL0)
    a1 = L1 + S0(E0)
    invL0 = analytic_apply("reciprocal", L0)
    r1 = a1 * invL0
    E1 = divide(a1 - ePlogL0 * op_P(r1))
    a2 = S1(E0) + S0(E1)
    r2 = a2 * invL0 - r1 * r1 * 0.5
    h0 = bL0.apply("log") * 0.5 + (-0.25 * LOG_PI_2)
    h1 = diag_restrict(r1) * 0.5
    h2 = diag_restrict(r2) * 0.5
    return {"E0": E0, "E1": E1, "h0": h0, "h1": h1, "h2": h2}


# ---------------------------------------------------------------------------
# quantitative budget


@dataclass
class Budget:
    sigma: float
    sigma_p: float
    theta: float
    sigma_star: float
    norms: dict
    C0: float
    M0: float
    P_bound: float
    m0: float
    m1: float
    r0: float
    C_lip: float
    M1: float
    C1: float
    C2: float
    C3: float
    k_cap: int
    rho0: float
    eps0: float

    def text(self):
        lines = [f"sigma = {self.sigma!r}", f"sigma_prime = {self.sigma_p!r}", f"theta = {self.theta!r}",
                 f"sigma_star = {self.sigma_star!r}"]
        for k, v in self.norms.items():
            lines.append(f"norm_{k} = {v!r}")
        for k in ("C0", "M0", "P_bound", "m0", "m1", "r0", "C_lip", "M1", "C1", "C2", "C3", "k_cap", "rho0", "eps0"):
            lines.append(f"{k} = {getattr(self, k)!r}")
        lines.append(f"theta_le_rho0 = {abs(self.theta) <= self.rho0}")
        lines.append(f"theta_le_1_over_m1 = {abs(self.theta) * self.m1 <= 1}")
        return "\n".join(lines) + "\n"


def lipschitz_budget(geom, sigma, sigma_p, theta, sigma_star=None, eps0=0.05):
    """Assemble the displayed constants from measured majorant norms.

    Norms are coefficient majorants (upper-bound surrogates of the sup norms);
    the budget is a diagnostic and flags, rather than proves, its hypotheses.
    """
    sigma_star = sigma if sigma_star is None else sigma_star
    if not 0 < sigma_p < sigma <= sigma_star < 1:
        raise UsageError("need 0 < sigma' < sigma <= sigma* < 1")
    b = Band(sigma)
    L = compute_L(geom, theta)
    invL = analytic_apply("reciprocal", L)
    logL = diag_restrict(L).apply("log")
    norms = {
        "dV": majorant_norm(geom.dV, b),
        "dV_sq": majorant_norm(geom.dV * geom.dV, b),
        "inv_abs_dV2": majorant_norm(geom.inv_4absdV2, b) * 4,
        "u_over_V": majorant_norm(geom.unit, b),
        "phiprime": majorant_norm(geom.phiprime, b),
        "inv_L": majorant_norm(invL, b),
        "lapV": majorant_norm(geom.lapV, b),
        "P_log_L": majorant_norm(poisson_extend(logL, geom.N, geom.R), b),
    }
    n = norms
    C0 = max(
        n["lapV"] / 4 + 12 * n["dV"] * n["phiprime"] + 42 * n["dV_sq"] * n["u_over_V"],
        10206 * n["phiprime"] ** 2 * n["u_over_V"],
    )

    def M0(s, sp):
        return C0 * (1 / ((s - sp) * sp) + abs(theta) / ((s - sp) ** 3 * sp))

    Pn = 6 / sigma_p
    sstar = Band(sigma_star)
    r0 = 2 * majorant_norm(op_T(geom, theta), sstar)
    m0 = max(1 / eps0, 4 * M0(sigma, sigma_p) * n["inv_L"] * r0)
    m1 = max(m0, 2 * Pn * M0(sigma, sigma_p) * n["inv_L"] * r0)
    spp = 0.5 * (sigma + sigma_p)
    a = n["inv_abs_dV2"] * n["u_over_V"]
    bL = n["inv_L"] * math.exp(n["P_log_L"])
    C_lip = 3 * a / (2 * (sigma - sigma_p)) * (1 + 6 * (6 / spp) * bL)
    M1 = C_lip * M0(sigma, spp)
    C1 = 12 * a * (1 + 36 * bL) * C0
    C2 = 2 * max(1.0, C1 * (16 / sigma_star**4 + 64 / sigma_star**6))
    C3 = C0 * n["inv_L"] * max(2.0, 12 / sigma_star) * r0 * max(4 / sigma_star**2, 16 / sigma_star**4)
    rho0 = C2 / (C3**2 * (1 + 1 / C2) ** 2)
    cap = k_cap(theta, C2) if theta != 0 else 0
    return Budget(sigma, sigma_p, float(theta), sigma_star, norms, C0, M0(sigma, sigma_p), Pn, m0, m1, r0,
                  C_lip, M1, C1, C2, C3, cap, rho0, eps0)
