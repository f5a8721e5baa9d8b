"""Brute-force ground truth: quadrature, orthonormal polynomials, kernels.

Moments are computed in extended precision (mpmath) on a tensor rule:
composite Gauss-Legendre in the radius times the trapezoid rule in the angle,
with dA = r dr dtheta / pi so that the unit disk has area one.  Everything
downstream of the orthonormal coefficients (kernels, Berezin objects) is
evaluated in double precision.
"""

from __future__ import annotations

import math
from functools import cached_property
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import ConfigError, DomainError, PrecisionError, UsageError

__all__ = [
    "QuadratureRule",
    "OrthonormalBasis",
    "BerezinReport",
    "build_quadrature",
    "gram_matrix",
    "orthonormalize",
    "exact_ginibre_basis",
    "eval_kernel",
    "berezin_density",
    "berezin_potential",
    "berezin_cauchy",
    "prop102_sides",
    "berezin_zeros",
    "berezin_report",
    "verify_exact_potential",
    "verify_berezin_system",
    "compare_prediction",
    "predicted_orthogonality",
]


# ---------------------------------------------------------------------------
# quadrature


def _Q_numpy(spec, z):
    return spec.Q(np.asarray(z, dtype=complex))


def _Q_mp(table, z):
    zb = mpmath.conj(z)
    s = mpmath.mpc(0)
    for (a, b), c in table.items():
        s += mpmath.mpc(c) * z**a * zb**b
    return s.real


@dataclass
class QuadratureRule:
    """Tensor rule on the disk |z| <= R; weights include dA's 1/pi."""

    spec: object
    m: float
    R: float
    digits: int
    r: list  # mp radii
    wr: list  # mp radial weights times 2/n_theta (angle and 1/pi folded in)
    n_theta: int
    mw: list = field(repr=False)  # mp: wr_i e^{-2mQ(z_il)}, per ring
    tail_estimate: float = 0.0

    @property
    def nodes(self):
        r = np.array([float(x) for x in self.r])
        th = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        return np.multiply.outer(r, np.exp(1j * th))

    @property
    def weights(self):
        """dA weights (no e^{-2mQ}) on ``nodes``."""
        w = np.array([float(x) for x in self.wr])
        return np.repeat(w[:, None], self.n_theta, axis=1)

    @property
    def measure(self):
        """Weights times e^{-2mQ} on ``nodes`` (double)."""
        return np.array([[float(x) for x in row] for row in self.mw])


def _radius(spec, m, n_max, digits):
    th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    target = -(digits / 2 + 3) * math.log(10)

    def g(r):
        qmin = float(np.min(_Q_numpy(spec, r * np.exp(1j * th))))
        return (2 * n_max + 2) * math.log(r) - 2 * m * qmin

    r = 1.0
    while r < 1e3:
        if g(r) < target and g(r * 1.1) < g(r):
            return r, math.exp(g(r))
        r *= 1.05
    raise ConfigError("potential", "quadrature radius search failed: Q does not confine the weight")


def build_quadrature(spec, m, n_max=16, digits=50, radius="auto", nodes_r=None, nodes_theta=None, refine=1.0):
    """Rule accurate for <z^j, z^k> with j, k <= n_max to about digits/2 places."""
    if m <= 0:
        raise ConfigError("m", "m must be positive")
    if radius in (None, "auto"):
        R, tail = _radius(spec, m, n_max, digits)
    else:
        R = float(radius)
        tail = float("nan")
    th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    ring = 2 * m * _Q_numpy(spec, R * np.exp(1j * th))
    spread = float(np.max(ring) - np.min(ring))
    if nodes_theta is None:
        nodes_theta = 2 * (2 * n_max + 1) + 2 * int(math.ceil(math.e * spread / 2 + digits))
    nodes_theta = int(math.ceil(nodes_theta * refine))
    width = min(R / 4, 1.5 / math.sqrt(m))
    panels = int(math.ceil(R / width))
    per = max(20, digits // 2) if nodes_r is None else max(4, int(nodes_r) // panels)
    per = int(math.ceil(per * refine))
    table = spec.table()
    with mpmath.workdps(digits + 10):
        X, W = mpmath.mp.gauss_quadrature(per, "legendre")
        Rm = mpmath.mpf(R)
        h = Rm / panels
        radii, wr = [], []
        for p in range(panels):
            a = h * p
            for x, w in zip(X, W):
                rr = a + h * (x + 1) / 2
                radii.append(rr)
                wr.append(w * h / 2 * rr * 2 / nodes_theta)  # r dr * (2 pi / n) / pi
        angles = [2 * mpmath.pi * l / nodes_theta for l in range(nodes_theta)]
        units = [mpmath.expj(a) for a in angles]
        mw = []
        for rr, w in zip(radii, wr):
            mw.append([w * mpmath.exp(-2 * m * _Q_mp(table, rr * e)) for e in units])
    return QuadratureRule(spec, m, R, digits, radii, wr, nodes_theta, mw, tail)


def gram_matrix(rule, n_max):
    """Moments <z^j, z^k> = int z^j conj(z)^k e^{-2mQ} dA, j, k <= n_max (mp)."""
    n = rule.n_theta
    D = 2 * n_max
    with mpmath.workdps(rule.digits + 10):
        cos = [[mpmath.cos(2 * mpmath.pi * d * l / n) for l in range(n)] for d in range(D + 1)]
        sin = [[mpmath.sin(2 * mpmath.pi * d * l / n) for l in range(n)] for d in range(D + 1)]
        G = mpmath.matrix(n_max + 1, n_max + 1)
        for rr, row in zip(rule.r, rule.mw):
            S = [mpmath.mpc(mpmath.fdot(cos[d], row), mpmath.fdot(sin[d], row)) for d in range(D + 1)]
            pw = [rr**e for e in range(2 * n_max + 1)]
            for j in range(n_max + 1):
                for k in range(n_max + 1):
                    d = j - k
                    s = S[d] if d >= 0 else mpmath.conj(S[-d])
                    G[j, k] += pw[j + k] * s
    return G


# ---------------------------------------------------------------------------
# orthonormal polynomials


@dataclass
class OrthonormalBasis:
    """P_k(z) = sum_j coeffs[k][j] z^j, k = 0..n_max (mp and double copies)."""

    m: float
    n_max: int
    coeffs_mp: object
    kappa: list
    gram: object
    digits: int
    rule: QuadratureRule
    residual: float = float("nan")
    spec: object = None

    @cached_property
    def coeffs(self):
        C = np.zeros((self.n_max + 1, self.n_max + 1), dtype=complex)
        for k in range(self.n_max + 1):
            for j in range(k + 1):
                C[k, j] = complex(self.coeffs_mp[k, j])
        return C

    def P(self, k, z):
        """Orthonormal polynomial of degree k at z (double)."""
        c = self.coeffs[k, : k + 1]
        return np.polyval(c[::-1], np.asarray(z, dtype=complex))

    def all_P(self, z, n):
        z = np.asarray(z, dtype=complex)
        C = self.coeffs
        return np.stack([np.polyval(C[k, : k + 1][::-1], z) for k in range(n)])

    def monic(self, k):
        """Coefficients of pi_k = kappa_k P_k (mp)."""
        return [self.coeffs_mp[k, j] * self.kappa[k] for j in range(k + 1)]

    def Q(self, z):
        return _Q_numpy(self.spec, z)


def _cholesky(G, digits):
    n = G.rows
    L = mpmath.matrix(n, n)
    for j in range(n):
        s = G[j, j] - sum((L[j, k] * mpmath.conj(L[j, k]) for k in range(j)), mpmath.mpf(0))
        s = mpmath.re(s)
        if s <= 0:
            raise PrecisionError(
                f"moment matrix not positive definite at order {j}; raise digits above {digits}"
            )
        L[j, j] = mpmath.sqrt(s)
        for i in range(j + 1, n):
            t = G[i, j] - sum((L[i, k] * mpmath.conj(L[j, k]) for k in range(j)), mpmath.mpf(0))
            L[i, j] = t / L[j, j]
    return L


def _lower_inverse(L):
    n = L.rows
    C = mpmath.matrix(n, n)
    for i in range(n):
        C[i, i] = 1 / L[i, i]
        for j in range(i):
            s = sum((L[i, k] * C[k, j] for k in range(j, i)), mpmath.mpf(0))
            C[i, j] = -s / L[i, i]
    return C


def orthonormalize(rule, n_max, check=True, max_residual=1e-8):
    """Cholesky G = L L^H of the moment matrix; P = L^{-1} (1, z, ..., z^n).

    G[j,k] = <z^j, z^k>, so the rows of C = L^{-1} are orthonormal:
    C G C^H = I.  With ``check`` the identity is re-tested against moments
    from a refined rule (1.5x nodes in both directions); a residual above
    ``max_residual`` means the working precision was exhausted.
    """
    with mpmath.workdps(rule.digits + 10):
        G = gram_matrix(rule, n_max)
        L = _cholesky(G, rule.digits)
        C = _lower_inverse(L)
        kappa = [L[k, k].real for k in range(n_max + 1)]
        basis = OrthonormalBasis(rule.m, n_max, C, kappa, G, rule.digits, rule, spec=rule.spec)
        if check:
            fine = build_quadrature(rule.spec, rule.m, n_max, rule.digits, radius=rule.R * 1.05, refine=1.5,
                                    nodes_theta=rule.n_theta)
            G2 = gram_matrix(fine, n_max)
            D = C * G2 * C.H - mpmath.eye(n_max + 1)
            basis.residual = float(max(abs(D[i, j]) for i in range(D.rows) for j in range(D.cols)))
            if not basis.residual <= max_residual:
                raise PrecisionError(
                    f"orthonormality residual {basis.residual:.3e} exceeds {max_residual:.0e}; "
                    f"raise digits above {rule.digits}"
                )
    return basis


def exact_ginibre_basis(m, n_max, digits=50):
    """Closed-form basis for Q = |z|^2/2: P_k = m^{(k+1)/2} z^k / sqrt(k!).

    Gamma moments <z^j, z^k> = delta_jk k!/m^{k+1}; no quadrature rule is attached.
    """
    from .geometry import PotentialSpec

    with mpmath.workdps(digits + 10):
        mm = mpmath.mpf(m)
        C = mpmath.matrix(n_max + 1, n_max + 1)
        G = mpmath.matrix(n_max + 1, n_max + 1)
        kappa = []
        for k in range(n_max + 1):
            G[k, k] = mpmath.factorial(k) / mm ** (k + 1)
            kappa.append(mpmath.sqrt(G[k, k]))
            C[k, k] = 1 / kappa[-1]
    return OrthonormalBasis(m, n_max, C, kappa, G, digits, None, 0.0, PotentialSpec("ginibre"))


# ---------------------------------------------------------------------------
# kernels and Berezin objects


def eval_kernel(basis, z, w, n):
    """Return (k(z,w), K(z,w), B(z,w)) with k summed over degrees < n."""
    if n > basis.n_max + 1:
        raise UsageError(f"kernel of {n} terms needs n_max >= {n - 1}")
    z = complex(z)
    w = np.asarray(w, dtype=complex)
    Pz = basis.all_P(np.array([z]), n)[:, 0]
    kzz = float(np.sum(np.abs(Pz) ** 2))
    if kzz <= 0:
        raise DomainError("degenerate source: k(z,z) = 0")
    Pw = basis.all_P(w, n)
    kzw = np.tensordot(Pz, np.conj(Pw), axes=(0, 0))
    Qz = float(basis.Q(z))
    Qw = basis.Q(w)
    K = kzw * np.exp(-basis.m * (Qz + Qw))
    B = np.abs(kzw) ** 2 / kzz * np.exp(-2 * basis.m * Qw)
    return kzw, K, B


def berezin_density(basis, z, w, n):
    return eval_kernel(basis, z, w, n)[2]


def _polar(center, s_lo, s_hi, m, n_alpha=256, per=24):
    """Polar rule around ``center`` on s in [s_lo, s_hi]; weights include 1/pi.

    The innermost panel uses s = s1 y^2 so that log s and 1/s integrands
    stay smooth.
    """
    width = 0.5 / math.sqrt(m)
    x, wx = np.polynomial.legendre.leggauss(per)
    s_all, w_all = [], []
    edges = np.linspace(s_lo, s_hi, max(2, int(math.ceil((s_hi - s_lo) / width)) + 1))
    for a, b in zip(edges[:-1], edges[1:]):
        if a == 0:
            y = (x + 1) / 2
            s = b * y * y
            ws = wx / 2 * 2 * b * y  # ds = 2 b y dy
        else:
            s = a + (b - a) * (x + 1) / 2
            ws = wx * (b - a) / 2
        s_all.append(s)
        w_all.append(ws * s)
    s = np.concatenate(s_all)
    ws = np.concatenate(w_all)
    al = 2 * np.pi * (np.arange(n_alpha) + 0.5) / n_alpha
    pts = center + np.multiply.outer(s, np.exp(1j * al))
    wts = np.repeat((ws * 2 / n_alpha)[:, None], n_alpha, axis=1)
    return pts, wts, s


def _centered(basis, z, w, n, fn):
    R = basis.rule.R
    if abs(w) > R + 1.0:  # integrand smooth on the support: the global rule suffices
        nodes, wts = basis.rule.nodes, basis.rule.weights
        return np.sum(berezin_density(basis, z, nodes, n) * wts * fn(nodes - w))
    s_lo = max(0.0, abs(w) - R)
    pts, wts, _ = _polar(complex(w), s_lo, abs(w) + R, basis.m)
    B = berezin_density(basis, z, pts, n)
    return np.sum(B * wts * fn(pts - w))


def berezin_potential(basis, z, w, n):
    """int B(z, xi) log|w - xi|^2 dA(xi) on a polar patch centered at w."""
    return float(np.real(_centered(basis, z, w, n, lambda d: np.log(np.abs(d) ** 2))))


def berezin_cauchy(basis, z, w, n):
    """int B(z, xi) / (w - xi) dA(xi), i.e. the w-derivative of the potential."""
    return complex(_centered(basis, z, w, n, lambda d: -1.0 / d))


def prop102_sides(basis, z, w, n):
    """Both sides of k(z,z)/k(w,z) (dB - c) + c = int k(z,xi)/(w - xi) e^{-2mQ} dA."""
    kzw, _, _ = eval_kernel(basis, w, np.array([z]), n)  # k(w, z)
    kwz = complex(kzw[0])
    kzz = float(np.real(eval_kernel(basis, z, np.array([z]), n)[0][0]))
    c = 1.0 / (w - z)
    lhs = kzz / kwz * (berezin_cauchy(basis, z, w, n) - c) + c
    R = basis.rule.R
    pts, wts, _ = _polar(complex(w), max(0.0, abs(w) - R), abs(w) + R, basis.m)
    k_z_xi = eval_kernel(basis, z, pts, n)[0]
    rhs = np.sum(k_z_xi * np.exp(-2 * basis.m * basis.Q(pts)) * wts / (w - pts))
    return lhs, complex(rhs)


@dataclass
class ZeroSet:
    roots: np.ndarray
    singular: bool
    degree: int


def berezin_zeros(basis, z, n):
    """Roots in w of sum_{k<n} conj(P_k(z)) P_k(w) (companion matrix)."""
    if n < 2:
        raise UsageError("zero sets need n >= 2")
    C = basis.coeffs[:n, :n]
    Pz = basis.all_P(np.array([complex(z)]), n)[:, 0]
    poly = np.conj(Pz) @ C  # coefficients of w^0 .. w^{n-1}
    scale = float(np.max(np.abs(poly)))
    deg = n - 1
    while deg > 0 and abs(poly[deg]) <= 1e-12 * scale:
        deg -= 1
    roots = np.roots(poly[: deg + 1][::-1]) if deg > 0 else np.array([], dtype=complex)
    return ZeroSet(roots, deg < n - 1, deg)


@dataclass
class BerezinReport:
    z: complex
    n: int
    mass: float
    kernel_zz: float
    zeros: ZeroSet
    potential: dict
    singular: bool


def berezin_report(basis, z, n, radii=(10, 20, 40)):
    nodes, meas = basis.rule.nodes, basis.rule.weights
    B = berezin_density(basis, z, nodes, n)
    mass = float(np.sum(B * meas))
    kzz = float(np.real(eval_kernel(basis, z, np.array([z]), n)[0][0]))
    zs = berezin_zeros(basis, z, n)
    pot = {r: berezin_potential(basis, z, r, n) for r in radii}
    return BerezinReport(complex(z), n, mass, kzz, zs, pot, zs.singular)


# ---------------------------------------------------------------------------
# verification reports


def _global_integral(basis, density, fn):
    nodes, w = basis.rule.nodes, basis.rule.weights
    return np.sum(density(nodes) * w * fn(nodes))


def verify_exact_potential(basis, n, radii=(10, 20, 40)):
    """Orthogonality, norm identity, far-field log behaviour and smoothness of
    pi^{-1} dU_0 for the monic pi_n.

    Returns a dict of measured residuals.
    """
    if n > basis.n_max:
        raise UsageError("n exceeds n_max")
    with mpmath.workdps(basis.digits + 10):
        pi = basis.monic(n)
        G = basis.gram
        ortho = mpmath.mpf(0)
        for j in range(n):
            s = sum((G[j, k] * mpmath.conj(pi[k]) for k in range(n + 1)), mpmath.mpc(0))
            ortho = max(ortho, abs(s))
        norm2 = sum(
            (pi[j] * mpmath.conj(pi[k]) * G[j, k] for j in range(n + 1) for k in range(n + 1)), mpmath.mpc(0)
        ).real
        kappa2 = basis.kappa[n] ** 2
    coeffs = np.array([complex(c) for c in pi])

    def pi_d(x):
        return np.polyval(coeffs[::-1], x)

    m = basis.m

    def dens(x):
        return np.abs(pi_d(x)) ** 2 * np.exp(-2 * m * basis.Q(x))

    far = {}
    for r in radii:
        U0 = float(np.real(_global_integral(basis, dens, lambda x: np.log(np.abs(r - x) ** 2))))
        far[r] = r * abs(U0 - float(kappa2) * math.log(r * r))
    zeros = np.roots(coeffs[::-1]) if n > 0 else np.array([])
    probe = {}
    if len(zeros):
        z0 = zeros[np.argmin(np.abs(zeros))]
        for eps in (1e-2, 1e-4, 1e-6):
            w = z0 + eps
            R = basis.rule.R
            pts, wts, _ = _polar(complex(w), max(0.0, abs(w) - R), abs(w) + R, m)
            val = np.sum(np.conj(pi_d(pts)) / (w - pts) * np.exp(-2 * m * basis.Q(pts)) * wts)
            probe[eps] = abs(complex(val))
    return {
        "orthogonality": float(ortho),
        "orthogonality_relative": float(ortho) / math.sqrt(float(kappa2)),
        "kappa2": float(kappa2),
        "norm2_requadrature": float(norm2),
        "norm_identity": abs(float(norm2) - float(kappa2)) / float(kappa2),
        "far_field": far,
        "cauchy_probe": probe,
    }


def verify_berezin_system(basis, z, n, radii=(10, 20, 40)):
    """Check the pair (B - log|z-w|^2, k(z,z)^{-1/2} k(., z))."""
    Pz = basis.all_P(np.array([complex(z)]), n)[:, 0]
    if abs(Pz[n - 1]) <= 1e-12 * float(np.max(np.abs(Pz))):
        raise DomainError("singular point: P_{n-1}(z) = 0")
    kzz = float(np.sum(np.abs(Pz) ** 2))
    q_z = math.sqrt(kzz)

    def q(x):
        return np.tensordot(np.conj(Pz), basis.all_P(x, n), axes=(0, 0)) / q_z

    norm2 = float(np.real(_global_integral(basis, lambda x: np.abs(q(x)) ** 2 * np.exp(-2 * basis.m * basis.Q(x)),
                                           lambda x: 1.0)))
    decay = {}
    for r in radii:
        A = berezin_potential(basis, z, r, n) - math.log(abs(r - z) ** 2)
        decay[r] = r * abs(A)
    eta0 = complex(np.conj(Pz[n - 1]) * basis.coeffs[n - 1, n - 1] / q_z)
    bound = 2 * (abs(z) + basis.rule.R)
    return {
        "q_at_z": float(np.real(q(np.array([complex(z)]))[0])),
        "q_at_z_expected": q_z,
        "q_norm": math.sqrt(norm2),
        "decay": decay,
        "decay_bound": bound,
        "eta0": eta0,
    }


def compare_prediction(basis, geom, sol, cfg, probes=None):
    """Relative errors of predicted P (up to one fitted unimodular constant)
    and of the predicted wave density against the oracle at the probes."""
    from .wavefield import predict_P, predict_wave

    n = cfg.n
    if n > basis.n_max:
        raise UsageError(f"oracle basis needs n_max >= {n}")
    if probes is None:
        probes = geom.psi(np.exp(2j * np.pi * np.arange(32) / 32))
    probes = np.asarray(probes, dtype=complex)
    Po = basis.P(n, probes)
    Pp = predict_P(geom, sol, cfg, probes)
    c = np.sum(Po * np.conj(Pp))
    phase = c / abs(c) if abs(c) > 0 else 1.0
    errP = np.abs(Po - phase * Pp) / np.abs(Po)
    wo = np.abs(Po) ** 2 * np.exp(-2 * cfg.m * basis.Q(probes))
    wp = predict_wave(geom, sol, cfg, probes)
    errW = np.abs(wp - wo) / wo
    return {
        "probes": probes,
        "P_oracle": Po,
        "P_pred": Pp,
        "phase": complex(phase),
        "err_P": errP,
        "wave_oracle": wo,
        "wave_pred": wp,
        "err_wave": errW,
        "sup_err_P": float(np.max(errP)),
        "sup_err_wave": float(np.max(errW)),
    }


def predicted_orthogonality(basis, geom, sol, cfg):
    """Orthogonality of f = chi_2 P_pred to z^j, j < n, on the oracle rule.

    ``relative`` is max_j |<f, z^j>| / ||f||; ``cosine`` also divides by ||z^j||.
    """
    from .geometry import invert_map
    from .wavefield import predict_P

    nodes = basis.rule.nodes
    mu = basis.rule.measure
    with np.errstate(all="ignore"):
        zeta = invert_map(geom, nodes, strict=False)
    ok = np.isfinite(zeta) & (cfg.chi2(np.where(np.isfinite(zeta), zeta, 1.0)) > 0)
    f = np.zeros(nodes.shape, dtype=complex)
    f[ok] = predict_P(geom, sol, cfg, nodes[ok])
    nf = math.sqrt(float(np.sum(np.abs(f) ** 2 * mu)))
    rel, cos = 0.0, 0.0
    for j in range(cfg.n):
        zj = nodes**j
        ip = abs(complex(np.sum(f * np.conj(zj) * mu)))
        nz = math.sqrt(float(np.sum(np.abs(zj) ** 2 * mu)))
        rel = max(rel, ip / nf)
        cos = max(cos, ip / (nf * nz))
    return {"relative": rel, "cosine": cos, "norm": nf}
