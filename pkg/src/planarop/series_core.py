"""Truncated Hermitian-analytic Laurent series near the unit circle.

A series F(zeta, eta) is stored in the *slice basis*

    F = sum_{|d| <= N, p <= R} a[d, p] * B_d * u**p,
    B_d = zeta**d * (zeta*eta)**(-d/2),      u = 1 - zeta*eta.

On the physical slice eta = conj(zeta) = r e^{-i theta} we get B_d = e^{i d theta}
and u = 1 - r**2, so ``a`` is a Fourier expansion along the circle times a
Taylor expansion in the distance to it.  Monomials convert exactly through

    zeta**j * eta**k = B_{j-k} * (1 - u)**((j+k)/2),

so polynomial and Laurent data in (zeta, eta) enter without loss, while functions
such as log(zeta*eta) = log(1-u), which are not Laurent polynomials on any
bi-annulus, are still represented to the full radial order.

Coefficients carry a leading ring axis: one slot for complex doubles or big
complex numbers, K+1 slots for theta-jets (truncated polynomials in theta).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import fft as sfft

from .errors import ConvergenceError, DomainError, UsageError

__all__ = [
    "ScalarRing",
    "Band",
    "CircleSeries",
    "HermitianSeries",
    "Laurent",
    "multiply",
    "hermitian_transpose",
    "diag_restrict",
    "diag_divide",
    "poisson_extend",
    "analytic_apply",
    "differentiate",
    "majorant_norm",
    "DEFAULT_BAND",
]

TAIL_FLAG = 1e-6
VANISH_TOL = 1e-9
CENTER_SAFETY = 0.8
_FUNCTIONS = ("exp", "log", "sqrt", "reciprocal", "power")


# ---------------------------------------------------------------------------
# rings and bands


@dataclass(frozen=True)
class ScalarRing:
    """Scalar ring of series coefficients.

    ``kind`` is ``complex-double``, ``theta-jet`` (with ``order`` K, arithmetic
    modulo theta**(K+1)) or ``big-complex`` (with ``digits`` >= 30).
    """

    kind: str = "complex-double"
    order: int = 0
    digits: int = 0

    def __post_init__(self):
        if self.kind not in ("complex-double", "theta-jet", "big-complex"):
            raise UsageError(f"unknown ring kind {self.kind!r}")
        if self.kind == "theta-jet" and not 0 <= self.order <= 12:
            raise UsageError("theta-jet order must be in [0, 12]")
        if self.kind == "big-complex" and self.digits < 30:
            raise UsageError("big-complex needs digits >= 30")

    @classmethod
    def double(cls):
        return cls("complex-double")

    @classmethod
    def jets(cls, order):
        return cls("theta-jet", order=int(order))

    @classmethod
    def big(cls, digits=50):
        return cls("big-complex", digits=int(digits))

    @property
    def size(self):
        return self.order + 1 if self.kind == "theta-jet" else 1

    @property
    def is_big(self):
        return self.kind == "big-complex"

    @property
    def eps(self):
        return 10.0 ** (-self.digits) if self.is_big else 2.2e-16

    @property
    def vanish_tol(self):
        # double: 1e-9; big: scaled by the precision ratio
        return VANISH_TOL * self.eps / 2.2e-16

    def label(self):
        if self.kind == "theta-jet":
            return f"theta-jet({self.order})"
        if self.is_big:
            return f"big-complex({self.digits})"
        return self.kind

    @classmethod
    def parse(cls, text):
        text = text.strip()
        if text.startswith("theta-jet"):
            return cls.jets(int(text[text.index("(") + 1 : text.index(")")]))
        if text.startswith("big-complex"):
            return cls.big(int(text[text.index("(") + 1 : text.index(")")]))
        return cls(text)

    def zeros(self, shape):
        shape = (self.size,) + tuple(shape)
        if self.is_big:
            out = np.empty(shape, dtype=object)
            out.fill(mpmath.mpc(0))
            return out
        return np.zeros(shape, dtype=complex)

    def element(self, value):
        """Ring element from a number (placed at jet 0) or a jet sequence."""
        out = self.zeros(())
        vals = np.atleast_1d(np.asarray(value, dtype=object))
        if vals.size > self.size:
            raise UsageError("jet value longer than ring order")
        for i, v in enumerate(vals):
            out[i] = self.coerce(v)
        return out

    def coerce(self, v):
        if self.is_big:
            with mpmath.workdps(self.digits):
                return mpmath.mpc(v)
        return complex(v)


@dataclass(frozen=True)
class Band:
    """Fattened-diagonal band of width sigma, rho = 1/(sigma + sqrt(1+sigma^2))."""

    sigma: float

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise DomainError("band sigma must lie in (0, 1)")

    @property
    def rho(self):
        return 1.0 / (self.sigma + math.sqrt(1.0 + self.sigma**2))

    @property
    def lam(self):
        return 1.0 / self.rho

    @property
    def mu(self):
        # bound for |1 - zeta*eta| on the annulus rho <= |zeta| <= 1/rho
        return self.lam**2 - 1.0


DEFAULT_BAND = Band(0.1)


def _digits_of(x):
    ring = x if isinstance(x, ScalarRing) else getattr(x, "ring", None)
    return ring.digits if isinstance(ring, ScalarRing) and ring.is_big else 0


def _ring_precision(fn):
    """Run ``fn`` at the working precision of any big-complex ring among its arguments."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        digits = max((_digits_of(a) for a in (*args, *kwargs.values())), default=0)
        if not digits:
            return fn(*args, **kwargs)
        with mpmath.workdps(digits):
            return fn(*args, **kwargs)

    return wrapper


# ---------------------------------------------------------------------------
# low-level kernels


@functools.lru_cache(maxsize=512)
def _binom_float(alpha, R):
    c = np.empty(R + 1)
    c[0] = 1.0
    for i in range(1, R + 1):
        c[i] = c[i - 1] * (i - 1 - alpha) / i
    return c


def _binom(alpha, R, big=False, digits=50):
    """Coefficients of (1-u)**alpha up to u**R."""
    if not big:
        return _binom_float(float(alpha), R)
    with mpmath.workdps(digits):
        a = mpmath.mpf(alpha)
        c = [mpmath.mpf(1)]
        for i in range(1, R + 1):
            c.append(c[-1] * (i - 1 - a) / i)
        return np.array(c, dtype=object)


def _uconv(x, y):
    """Truncated convolution along the last axis (radial order)."""
    R1 = x.shape[-1]
    out = x[..., :1] * y
    for i in range(1, R1):
        out[..., i:] = out[..., i:] + x[..., i : i + 1] * y[..., : R1 - i]
    return out


def _ring_uconv(x, y):
    """Truncated convolution over the jet axis (0) and the radial axis (-1)."""
    J = x.shape[0]
    if J == 1:
        return _uconv(x, y)
    out = np.zeros(np.broadcast_shapes(x.shape, y.shape), dtype=np.result_type(x, y))
    for j1 in range(J):
        for j2 in range(J - j1):
            out[j1 + j2] += _uconv(x[j1], y[j2])
    return out


def _shift_weights(R, N, sign, big=False, digits=50):
    """Rows (1-u)^(sign*|d|/2), d = -N..N, as a (2N+1, R+1) block."""
    if big:
        return np.stack([_binom(sign * abs(d) / 2.0, R, True, digits) for d in range(-N, N + 1)])
    return _shift_weights_float(R, N, sign)


@functools.lru_cache(maxsize=64)
def _shift_weights_float(R, N, sign):
    return np.stack([_binom_float(sign * abs(d) / 2.0, R) for d in range(-N, N + 1)])


def _cheap_norm(a, valid, band=None):
    """Weighted l1 norm of slice coefficients (bookkeeping only)."""
    band = band or DEFAULT_BAND
    N = (a.shape[1] - 1) // 2
    d = np.abs(np.arange(-N, N + 1))
    w = band.lam ** d[:, None] * band.mu ** np.arange(valid + 1)[None, :]
    return float((_abs(a[:, :, : valid + 1]) * w[None]).sum())


def _jet_mul(x, y):
    """Truncated product over axis 0; other axes elementwise."""
    J = x.shape[0]
    out = np.zeros(np.broadcast_shapes(x.shape, y.shape), dtype=np.result_type(x, y))
    for j1 in range(J):
        for j2 in range(J - j1):
            out[j1 + j2] += x[j1] * y[j2]
    return out


def _jet_fn(name, x, alpha=None):
    """Apply a scalar function to jets stored along axis 0 (complex arrays)."""
    J = x.shape[0]
    g = np.zeros_like(x)
    x0 = x[0]
    if name == "exp":
        g[0] = np.exp(x0)
        for p in range(1, J):
            g[p] = sum(i * x[i] * g[p - i] for i in range(1, p + 1)) / p
    elif name == "log":
        g[0] = np.log(x0)
        for p in range(1, J):
            s = sum(i * g[i] * x[p - i] for i in range(1, p))
            g[p] = (x[p] - s / p) / x0
    elif name == "sqrt":
        g[0] = np.sqrt(x0)
        for p in range(1, J):
            s = sum(g[i] * g[p - i] for i in range(1, p))
            g[p] = (x[p] - s) / (2 * g[0])
    elif name == "reciprocal":
        g[0] = 1.0 / x0
        for p in range(1, J):
            g[p] = -g[0] * sum(x[i] * g[p - i] for i in range(1, p + 1))
    elif name == "power":
        g[0] = x0**alpha
        for p in range(1, J):
            s = sum((alpha * i - p + i) * x[i] * g[p - i] for i in range(1, p + 1))
            g[p] = s / (p * x0)
    else:
        raise UsageError(f"unknown function {name!r}")
    return g


def _series_fn(name, X, alpha=None):
    """Compose fn with a power series in u whose coefficients are jets.

    X has shape (J, ..., R+1); the recurrences follow from f*g' = (...)
    relations and only need jet products and the inverse of the constant term.
    """
    R1 = X.shape[-1]
    G = np.zeros_like(X)
    x0 = X[..., 0]
    g0 = _jet_fn(name, x0, alpha)
    G[..., 0] = g0
    if R1 == 1:
        return G
    inv0 = None if name == "exp" else _jet_fn("reciprocal", x0)
    if name == "sqrt":
        inv0 = _jet_fn("reciprocal", 2 * g0)
    k = np.arange(1, R1)
    for p in range(1, R1):
        xi = X[..., 1 : p + 1]
        if name == "exp":
            s = _jet_mul(xi * k[:p], G[..., p - 1 :: -1]).sum(-1)
            G[..., p] = s / p
        elif name == "log":
            s = _jet_mul(G[..., 1:p] * k[: p - 1], X[..., p - 1 : 0 : -1]).sum(-1) if p > 1 else 0
            G[..., p] = _jet_mul(X[..., p] - s / p, inv0)
        elif name == "sqrt":
            s = _jet_mul(G[..., 1:p], G[..., p - 1 : 0 : -1]).sum(-1) if p > 1 else 0
            G[..., p] = _jet_mul(X[..., p] - s, inv0)
        elif name == "reciprocal":
            s = _jet_mul(xi, G[..., p - 1 :: -1]).sum(-1)
            G[..., p] = -_jet_mul(s, g0)
        elif name == "power":
            w = alpha * k[:p] - p + k[:p]
            s = _jet_mul(xi * w, G[..., p - 1 :: -1]).sum(-1)
            G[..., p] = _jet_mul(s, inv0) / p
    return G


def _grid_size(N):
    return sfft.next_fast_len(4 * N + 2)


def _to_grid(a, M):
    J, D, R1 = a.shape
    N = (D - 1) // 2
    buf = np.zeros((J, M, R1), dtype=complex)
    buf[:, np.arange(-N, N + 1) % M, :] = a
    return sfft.ifft(buf, axis=1) * M


def _from_grid(g, N):
    """Return kept modes |d| <= N and the weighted mass of the dropped modes."""
    M = g.shape[1]
    c = sfft.fft(g, axis=1) / M
    keep = np.arange(-N, N + 1) % M
    mask = np.ones(M, dtype=bool)
    mask[keep] = False
    dropped = 0.0
    if mask.any():
        k = np.arange(M)[mask]
        d = np.where(k <= M // 2, k, k - M)
        dropped = _mass(c[:, mask, :], d)
    return c[:, keep, :], dropped


def _mass(c, d, band=None):
    """Weighted l1 mass of slice coefficients c[jet, i, p] at modes d[i]."""
    band = band or DEFAULT_BAND
    w = band.lam ** np.abs(np.asarray(d))[:, None] * band.mu ** np.arange(c.shape[-1])[None, :]
    return float((_abs(c) * w[None]).sum())


def _mp_abs_sum(x):
    return float(sum(abs(v) for v in np.ravel(x)))


def _abs(x):
    if x.dtype == object:
        return np.vectorize(lambda v: float(abs(v)), otypes=[float])(x)
    return np.abs(x)


# ---------------------------------------------------------------------------
# circle data


@dataclass(frozen=True, eq=False)
class CircleSeries:
    """Fourier data b_d, |d| <= D, of a function on the unit circle."""

    coeffs: np.ndarray
    ring: ScalarRing = field(default_factory=ScalarRing.double)
    tail: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] % 2 != 1 or c.shape[0] != self.ring.size:
            raise UsageError("circle coefficients must have shape (jets, 2D+1)")
        if not self.ring.is_big:
            c = c.astype(complex)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return (self.coeffs.shape[1] - 1) // 2

    @classmethod
    def from_modes(cls, modes, D, ring=None):
        ring = ring or ScalarRing.double()
        c = ring.zeros((2 * D + 1,))
        for d, v in modes.items():
            if abs(d) > D:
                raise UsageError(f"mode {d} exceeds degree {D}")
            c[:, d + D] = ring.element(v)
        return cls(c, ring)

    def mode(self, d):
        D = self.degree
        if abs(d) > D:
            return self.ring.zeros(())
        v = self.coeffs[:, d + D]
        return v[0] if self.ring.size == 1 else v

    def is_real(self, tol=1e-12):
        c = self.coeffs
        diff = c - np.conj(c[:, ::-1]) if c.dtype != object else c - np.vectorize(mpmath.conj)(c[:, ::-1])
        scale = max(1.0, float(_abs(c).max()))
        return float(_abs(diff).max()) <= tol * scale

    @_ring_precision
    def __call__(self, theta):
        """Value at e^{i theta}; leading jet axis kept only for jets."""
        th = np.asarray(theta, dtype=float)
        D = self.degree
        d = np.arange(-D, D + 1)
        if self.ring.is_big:
            with mpmath.workdps(self.ring.digits):
                vals = [sum(self.coeffs[0, k] * mpmath.expj(int(dd) * mpmath.mpf(t)) for k, dd in enumerate(d))
                        for t in np.ravel(th)]
            return np.array(vals, dtype=object).reshape(th.shape)
        ph = np.exp(1j * np.multiply.outer(th, d))
        out = np.tensordot(self.coeffs, ph, axes=([1], [ph.ndim - 1]))
        return out[0] if self.ring.size == 1 else out

    def jet(self, j):
        c = self.coeffs[j : j + 1]
        return CircleSeries(c, ScalarRing.double(), self.tail)

    @_ring_precision
    def __add__(self, other):
        if isinstance(other, CircleSeries):
            D = max(self.degree, other.degree)
            return CircleSeries(_pad_modes(self.coeffs, D) + _pad_modes(other.coeffs, D), self.ring, self.tail + other.tail)
        c = self.coeffs.copy()
        c[:, self.degree] = c[:, self.degree] + self.ring.element(other)
        return CircleSeries(c, self.ring, self.tail)

    @_ring_precision
    def __neg__(self):
        return CircleSeries(-self.coeffs, self.ring, self.tail)

    @_ring_precision
    def __sub__(self, other):
        return self + (-other)

    @_ring_precision
    def __mul__(self, s):
        if isinstance(s, CircleSeries):
            raise UsageError("multiply circle data via HermitianSeries")
        return CircleSeries(self.coeffs * s, self.ring, self.tail)

    __rmul__ = __mul__

    def apply(self, fn, alpha=None):
        """Pointwise composition of fn with this circle function."""
        h = HermitianSeries(self.coeffs[:, :, None], self.ring, tail=self.tail)
        return diag_restrict(analytic_apply(fn, h, alpha=alpha))

    def sup(self):
        return float(_abs(self.coeffs).sum())


def _pad_modes(c, D):
    d0 = (c.shape[1] - 1) // 2
    if d0 == D:
        return c
    out = np.zeros((c.shape[0], 2 * D + 1), dtype=c.dtype)
    if c.dtype == object:
        out.fill(mpmath.mpc(0))
    out[:, D - d0 : D + d0 + 1] = c
    return out


# ---------------------------------------------------------------------------
# Hermitian series


@dataclass(frozen=True, eq=False)
class HermitianSeries:
    """Coefficient block a[jet, d, p] in the slice basis (see module doc).

    ``valid`` is the highest radial order that is trusted; each division by
    (1 - zeta*eta) and each derivative lowers it by one.  ``tail`` accumulates
    the l1 mass of Fourier modes dropped by truncation.
    """

    a: np.ndarray
    ring: ScalarRing = field(default_factory=ScalarRing.double)
    valid: int | None = None
    tail: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.a)
        if a.ndim != 3 or a.shape[1] % 2 != 1 or a.shape[0] != self.ring.size:
            raise UsageError("coefficient block must have shape (jets, 2N+1, R+1)")
        if not self.ring.is_big and a.dtype != complex:
            a = a.astype(complex)
        v = a.shape[2] - 1 if self.valid is None else int(self.valid)
        if v < 0:
            raise DomainError("series has no valid radial orders left")
        if v < a.shape[2] - 1:
            a = a.copy()
            a[:, :, v + 1 :] = 0
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "valid", v)

    # -- shape ---------------------------------------------------------------
    @property
    def N(self):
        return (self.a.shape[1] - 1) // 2

    @property
    def R(self):
        return self.a.shape[2] - 1

    @property
    def flagged(self):
        """True when truncation mass exceeds 1e-6 of the majorant norm."""
        return self.tail > TAIL_FLAG * max(_cheap_norm(self.a, self.valid), 1e-300)

    # -- constructors ----------------------------------------------------------
    @classmethod
    def zero(cls, N, R, ring=None):
        ring = ring or ScalarRing.double()
        return cls(ring.zeros((2 * N + 1, R + 1)), ring)

    @classmethod
    @_ring_precision
    def constant(cls, value, N, R, ring=None):
        ring = ring or ScalarRing.double()
        a = ring.zeros((2 * N + 1, R + 1))
        a[:, N, 0] = ring.element(value)
        return cls(a, ring)

    @classmethod
    def u(cls, N, R, ring=None):
        """The polarization 1 - zeta*eta of 1 - |phi|^2."""
        ring = ring or ScalarRing.double()
        a = ring.zeros((2 * N + 1, R + 1))
        if R >= 1:
            a[0, N, 1] = ring.coerce(1)
        return cls(a, ring)

    @classmethod
    @_ring_precision
    def radial(cls, coeffs, N, R, ring=None):
        """Series sum_p c_p u**p (c_p scalars or jets)."""
        ring = ring or ScalarRing.double()
        a = ring.zeros((2 * N + 1, R + 1))
        for p, c in enumerate(coeffs[: R + 1]):
            a[:, N, p] = ring.element(c)
        return cls(a, ring)

    @classmethod
    @_ring_precision
    def from_monomials(cls, terms, N, R, ring=None):
        """Build from {(j, k): c} meaning sum c * zeta**j * eta**k (any signs)."""
        ring = ring or ScalarRing.double()
        a = ring.zeros((2 * N + 1, R + 1))
        tail = 0.0
        for (j, k), c in terms.items():
            d = j - k
            w = _binom((j + k) / 2.0, R, ring.is_big, ring.digits)
            if abs(d) > N:
                tail += _mass(ring.element(c)[:, None, None] * w[None, None, :], [d])
                continue
            a[:, d + N, :] = a[:, d + N, :] + ring.element(c)[:, None] * w[None, :]
        return cls(a, ring, tail=tail)

    @classmethod
    @_ring_precision
    def from_holomorphic(cls, coeffs, N, R, ring=None, conjugate=False):
        """Series of sum_k c_k zeta**k, or of sum_k conj(c_k) eta**k when conjugate."""
        ring = ring or ScalarRing.double()
        terms = {}
        for k, c in coeffs.items():
            if conjugate:
                cc = mpmath.conj(c) if ring.is_big else np.conj(complex(c))
                terms[(0, k)] = cc
            else:
                terms[(k, 0)] = c
        return cls.from_monomials(terms, N, R, ring)

    # -- arithmetic ------------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, HermitianSeries):
            raise UsageError("expected a HermitianSeries")
        if other.ring != self.ring or other.a.shape != self.a.shape:
            raise UsageError(
                f"ring/order mismatch: {self.ring.label()} N={self.N} R={self.R} vs "
                f"{other.ring.label()} N={other.N} R={other.R}"
            )

    @_ring_precision
    def __add__(self, other):
        if isinstance(other, HermitianSeries):
            self._check(other)
            return HermitianSeries(self.a + other.a, self.ring, min(self.valid, other.valid), self.tail + other.tail)
        a = self.a.copy()
        a[:, self.N, 0] = a[:, self.N, 0] + self.ring.element(other)
        return HermitianSeries(a, self.ring, self.valid, self.tail)

    __radd__ = __add__

    @_ring_precision
    def __neg__(self):
        return HermitianSeries(-self.a, self.ring, self.valid, self.tail)

    @_ring_precision
    def __sub__(self, other):
        return self + (-other)

    @_ring_precision
    def __rsub__(self, other):
        return (-self) + other

    @_ring_precision
    def __mul__(self, other):
        if isinstance(other, HermitianSeries):
            return multiply(self, other)
        if isinstance(other, np.ndarray) and other.shape == (self.ring.size,) and self.ring.size > 1:
            return self.jet_scale(other)
        s = self.ring.coerce(other) if self.ring.is_big else other
        return HermitianSeries(self.a * s, self.ring, self.valid, self.tail * abs(complex(other)))

    __rmul__ = __mul__

    @_ring_precision
    def __truediv__(self, s):
        return self * (1.0 / s)

    @_ring_precision
    def jet_scale(self, jet):
        """Multiply by a constant jet (ring element)."""
        jet = np.asarray(jet, dtype=self.a.dtype).reshape((self.ring.size, 1, 1))
        return HermitianSeries(_jet_mul(jet, self.a), self.ring, self.valid, self.tail)

    def theta_shift(self):
        """Multiply by the jet generator theta (drops the top jet)."""
        if self.ring.kind != "theta-jet":
            raise UsageError("theta_shift needs the theta-jet ring")
        a = np.zeros_like(self.a)
        a[1:] = self.a[:-1]
        return HermitianSeries(a, self.ring, self.valid, self.tail)

    def conj(self):
        return hermitian_transpose(self)

    def with_valid(self, v):
        return HermitianSeries(self.a, self.ring, min(self.valid, v), self.tail)

    def jet(self, j):
        """Extract one jet component as a complex-double series."""
        return HermitianSeries(self.a[j : j + 1].copy(), ScalarRing.double(), self.valid, self.tail)

    @_ring_precision
    def real_part(self):
        return (self + hermitian_transpose(self)) * 0.5

    # -- evaluation ------------------------------------------------------------
    def realize(self, zeta, max_order=None):
        """Value at physical points eta = conj(zeta); jets keep a leading axis."""
        z = np.asarray(zeta, dtype=complex)
        P = self.valid if max_order is None else min(self.valid, max_order)
        if self.ring.is_big:
            return self._realize_big(z, P)
        d = np.arange(-self.N, self.N + 1)
        r2 = np.abs(z) ** 2
        u = 1.0 - r2
        th = np.angle(z)
        ph = np.exp(1j * np.multiply.outer(th, d))  # (..., D)
        up = np.power.outer(u, np.arange(P + 1))  # (..., P+1)
        blk = self.a[:, :, : P + 1]
        out = np.einsum("jdp,...d,...p->j...", blk, ph, up)
        return out[0] if self.ring.size == 1 else out

    def _realize_big(self, z, P):
        vals = []
        with mpmath.workdps(self.ring.digits):
            for zz in np.ravel(z):
                zz = mpmath.mpc(zz)
                u = 1 - abs(zz) ** 2
                th = mpmath.arg(zz)
                s = mpmath.mpc(0)
                for di in range(2 * self.N + 1):
                    e = mpmath.expj((di - self.N) * th)
                    s += e * mpmath.polyval(list(self.a[0, di, P::-1]), u)
                vals.append(s)
        return np.array(vals, dtype=object).reshape(z.shape)

    def evaluate(self, zeta, eta, max_order=None):
        """Value at an independent pair (zeta, eta) near the torus (doubles only)."""
        if self.ring.is_big:
            raise UsageError("evaluate supports floating rings only")
        zeta = np.asarray(zeta, dtype=complex)
        eta = np.asarray(eta, dtype=complex)
        P = self.valid if max_order is None else min(self.valid, max_order)
        s = zeta * eta
        u = 1.0 - s
        d = np.arange(-self.N, self.N + 1)
        logb = np.log(zeta) - 0.5 * np.log(s)
        ph = np.exp(np.multiply.outer(logb, d))
        up = np.power.outer(u, np.arange(P + 1))
        out = np.einsum("jdp,...d,...p->j...", self.a[:, :, : P + 1], ph, up)
        return out[0] if self.ring.size == 1 else out

    # -- conversions -----------------------------------------------------------
    @_ring_precision
    def exterior_coeffs(self):
        """Coefficients in the basis e_d u^p, e_d = zeta^d (d>=0) or eta^|d|."""
        R = self.valid
        W = _shift_weights(R, self.N, -1, self.ring.is_big, self.ring.digits)
        return _uconv(self.a[:, :, : R + 1], W)

    @_ring_precision
    def to_monomials(self, tol=0.0):
        """Exact expansion into {(j, k): c} with j, k >= 0 (truncated at ``valid``)."""
        e = self.exterior_coeffs()
        terms = {}
        R = self.valid
        for di in range(2 * self.N + 1):
            d = di - self.N
            for p in range(R + 1):
                c = e[:, di, p]
                if all(abs(v) == 0 for v in np.ravel(c)):
                    continue
                for i in range(p + 1):
                    b = math.comb(p, i) * (-1) ** i
                    key = (d + i, i) if d >= 0 else (i, -d + i)
                    terms[key] = terms.get(key, 0) + b * c
        out = {}
        for k, v in terms.items():
            v = v[0] if self.ring.size == 1 else v
            if np.max(_abs(np.atleast_1d(np.asarray(v, dtype=object if self.ring.is_big else complex)))) > tol:
                out[k] = v
        return out

    def to_csv(self):
        """CSV block ``j,k,re,im`` of the monomial expansion."""
        lines = [f"# hermitian-series N={self.N} ring={self.ring.label()} R={self.R} valid={self.valid}"]
        blocks = [self] if self.ring.size == 1 else [self.jet(j) for j in range(self.ring.size)]
        for jj, s in enumerate(blocks):
            if self.ring.size > 1:
                lines.append(f"# jet={jj}")
            lines.append("j,k,re,im")
            for (j, k), c in sorted(s.to_monomials().items()):
                if self.ring.is_big:
                    with mpmath.workdps(self.ring.digits):
                        re_s = mpmath.nstr(mpmath.re(c), self.ring.digits)
                        im_s = mpmath.nstr(mpmath.im(c), self.ring.digits)
                else:
                    c = complex(c)
                    re_s, im_s = repr(c.real), repr(c.imag)
                lines.append(f"{j},{k},{re_s},{im_s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text):
        header = None
        jets = []
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("# hermitian-series"):
                header = dict(f.split("=", 1) for f in line.split()[2:])
                continue
            if line.startswith("# jet="):
                jets.append({})
                continue
            if not line or line.startswith("#") or line == "j,k,re,im":
                continue
            if not jets:
                jets.append({})
            j, k, re_s, im_s = line.split(",")
            jets[-1][(int(j), int(k))] = (re_s, im_s)
        if header is None:
            raise UsageError("missing '# hermitian-series' header")
        ring = ScalarRing.parse(header["ring"])
        N = int(header["N"])
        R = int(header.get("R", 2 * N))
        valid = int(header.get("valid", R))
        if ring.is_big:
            with mpmath.workdps(ring.digits):
                terms = {k: mpmath.mpc(mpmath.mpf(a), mpmath.mpf(b)) for k, (a, b) in jets[0].items()}
            return cls.from_monomials(terms, N, R, ring).with_valid(valid)
        parts = []
        for blk in jets:
            terms = {k: complex(float(a), float(b)) for k, (a, b) in blk.items()}
            parts.append(cls.from_monomials(terms, N, R).a[0])
        a = np.stack(parts) if parts else ring.zeros((2 * N + 1, R + 1))
        return cls(a, ring, valid)


# ---------------------------------------------------------------------------
# operations


@_ring_precision
def multiply(f, g):
    """Product of two series; dropped Fourier modes go into the tail figure."""
    f._check(g)
    valid = min(f.valid, g.valid)
    if f.ring.is_big:
        a, dropped = _multiply_big(f.a, g.a, f.N, f.ring)
    else:
        M = _grid_size(f.N)
        prod = _ring_uconv(_to_grid(f.a, M), _to_grid(g.a, M))
        a, dropped = _from_grid(prod, f.N)
    tail = f.tail * _cheap_norm(g.a, valid) + g.tail * _cheap_norm(f.a, valid) + dropped
    return HermitianSeries(a, f.ring, valid, tail)


def _multiply_big(x, y, N, ring):
    D = 2 * N + 1
    out = ring.zeros((D, x.shape[2]))
    dropped = 0.0
    with mpmath.workdps(ring.digits):
        nz = [i for i in range(D) if any(v != 0 for v in np.ravel(x[:, i, :]))]
        mz = [i for i in range(D) if any(v != 0 for v in np.ravel(y[:, i, :]))]
        for i in nz:
            for k in mz:
                d = (i - N) + (k - N)
                prod = _uconv(x[:, i, :], y[:, k, :])
                if abs(d) > N:
                    dropped += _mass(prod[:, None, :], [d])
                else:
                    out[:, d + N, :] = out[:, d + N, :] + prod
    return out, dropped


@_ring_precision
def hermitian_transpose(f):
    """Coefficients conj(a[-d, p]); realizes complex conjugation."""
    a = f.a[:, ::-1, :]
    a = np.vectorize(mpmath.conj, otypes=[object])(a) if f.ring.is_big else np.conj(a)
    return HermitianSeries(a, f.ring, f.valid, f.tail)


def diag_restrict(f):
    """Restriction to the diagonal circle zeta*eta = 1 (u = 0)."""
    return CircleSeries(f.a[:, :, 0].copy(), f.ring, f.tail)


@_ring_precision
def diag_divide(f, tol=None):
    """Quotient g with (1 - zeta*eta) g = f, for f vanishing on the circle."""
    tol = f.ring.vanish_tol if tol is None else tol
    b = _abs(f.a[:, :, 0])
    scale = _cheap_norm(f.a, f.valid)
    worst = float(b.max()) if b.size else 0.0
    allowed = tol * max(scale, 1e-300) + float(f.tail)
    if worst > allowed:
        d = int(np.unravel_index(np.argmax(b), b.shape)[1]) - f.N
        raise DomainError(
            f"diag_divide: restriction does not vanish (|b_{d}| = {worst:.3e}, tolerance {allowed:.3e})"
        )
    if f.valid < 1:
        raise DomainError("diag_divide: no radial order left")
    a = f.ring.zeros((2 * f.N + 1, f.R + 1))
    a[:, :, :-1] = f.a[:, :, 1:]
    return HermitianSeries(a, f.ring, f.valid - 1, f.tail)


@_ring_precision
def poisson_extend(b, N, R):
    """Bounded harmonic extension to |zeta| > 1 in polarized form.

    b_d e^{i d theta} becomes b_d zeta^d for d < 0 and b_d eta^{-d} for d > 0,
    i.e. b_d B_d (1-u)^{-|d|/2} in the slice basis.
    """
    ring = b.ring
    D = b.degree
    a = ring.zeros((2 * N + 1, R + 1))
    tail = b.tail
    for d in range(-D, D + 1):
        c = b.coeffs[:, d + D]
        if abs(d) > N:
            w = _binom(-abs(d) / 2.0, R, ring.is_big, ring.digits)
            tail += _mass(c[:, None, None] * w[None, None, :], [d])
            continue
        w = _binom(-abs(d) / 2.0, R, ring.is_big, ring.digits)
        a[:, d + N, :] = c[:, None] * w[None, :]
    return HermitianSeries(a, ring, tail=tail)


@_ring_precision
def differentiate(f, var):
    """Formal derivative in zeta (``var='zeta'``) or eta.

    d/dzeta (B_d u^p) = B_{d-1} (1-u)^{-1/2} [ (d/2) u^p - p (1-u) u^{p-1} ]
    and symmetrically for eta with d -> -d and B_{d+1}.
    """
    if var not in ("zeta", "eta"):
        raise UsageError("var must be 'zeta' or 'eta'")
    N, R = f.N, f.R
    ring = f.ring
    d = np.arange(-N, N + 1)
    p = np.arange(R + 1)
    half = (d / 2.0) if var == "zeta" else (-d / 2.0)
    if ring.is_big:
        with mpmath.workdps(ring.digits):
            half = np.array([mpmath.mpf(int(x)) / 2 for x in (d if var == "zeta" else -d)], dtype=object)
    c = f.a * half[None, :, None] + f.a * p[None, None, :]
    c[:, :, :-1] = c[:, :, :-1] - f.a[:, :, 1:] * p[None, None, 1:]
    out = ring.zeros((2 * N + 1, R + 1))
    shift = -1 if var == "zeta" else 1
    if shift == -1:
        out[:, :-1, :] = c[:, 1:, :]
        lost = c[:, :1, :]
    else:
        out[:, 1:, :] = c[:, :-1, :]
        lost = c[:, -1:, :]
    w = _binom(-0.5, R, ring.is_big, ring.digits)
    out = _uconv(out, np.broadcast_to(w, out.shape).copy() if ring.is_big else w)
    tail = f.tail + _mass(lost, [N + 1])
    return HermitianSeries(out, ring, f.valid - 1, tail)


@_ring_precision
def majorant_norm(f, band, max_order=None):
    """Coefficient majorant sum |e_{d,p}| rho^{-|d|} mu^p in the basis e_d u^p.

    This bounds the sup of the realization over rho <= |zeta| <= 1/rho, agrees
    with sum |c_jk| rho^{-j-k} on polynomials in zeta, eta, and is exactly
    submultiplicative.  Jets are summed over their components.
    """
    P = f.valid if max_order is None else min(f.valid, max_order)
    if isinstance(f, CircleSeries):
        d = np.arange(-f.degree, f.degree + 1)
        return float((_abs(f.coeffs) * band.lam ** np.abs(d)).sum())
    g = f if P == f.valid else f.with_valid(P)
    e = _abs(g.exterior_coeffs())
    d = np.abs(np.arange(-f.N, f.N + 1))
    w = band.lam ** d[:, None] * band.mu ** np.arange(P + 1)[None, :]
    return float((e * w[None]).sum())


@_ring_precision
def analytic_apply(fn, f, method=None, alpha=None, band=DEFAULT_BAND):
    """Compose ``fn`` (exp, log, sqrt, reciprocal, power) with a series.

    ``pointwise`` (default for floating rings) evaluates the Fourier direction on
    an FFT grid and composes the radial power series exactly at each angle.
    ``centered`` expands fn around the value at zeta = eta = 1 and requires the
    centered part's majorant below 0.8 (default for big-complex).
    """
    if fn not in _FUNCTIONS:
        raise UsageError(f"unknown function {fn!r}")
    if fn == "power" and alpha is None:
        raise UsageError("power needs alpha")
    method = method or ("centered" if f.ring.is_big else "pointwise")
    if method == "centered":
        return _apply_centered(fn, f, alpha, band)
    if method != "pointwise":
        raise UsageError(f"unknown method {method!r}")
    if f.ring.is_big:
        raise UsageError("pointwise method needs a floating ring")
    M = _grid_size(f.N)
    g = _to_grid(f.a[:, :, : f.valid + 1], M)
    _branch_check(fn, g[0, :, 0])
    out = _series_fn(fn, g, alpha)
    a, dropped = _from_grid(out, f.N)
    full = f.ring.zeros((2 * f.N + 1, f.R + 1))
    full[:, :, : f.valid + 1] = a
    res = HermitianSeries(full, f.ring, f.valid, f.tail + dropped)
    return res


def _branch_check(fn, vals):
    if fn in ("log", "sqrt", "power"):
        worst = float(np.min(vals.real))
        if worst <= 0:
            raise ConvergenceError(f"{fn}: argument has Re <= 0 on the circle (min {worst:.3e})")
    if fn == "reciprocal":
        if float(np.min(np.abs(vals))) == 0:
            raise ConvergenceError("reciprocal: argument vanishes on the circle")


def _center_value(f):
    return f.a[:, :, 0].sum(axis=1)  # value at theta = 0, u = 0


def _apply_centered(fn, f, alpha, band):
    ring = f.ring
    c = _center_value(f)
    ctx = mpmath.workdps(ring.digits) if ring.is_big else _nullctx()
    with ctx:
        if ring.is_big:
            c0 = c[0]
            if fn in ("log", "sqrt", "power") and mpmath.re(c0) <= 0:
                raise ConvergenceError(f"{fn}: center value has Re <= 0")
            inv = np.array([1 / c0], dtype=object)
            base = {
                "exp": lambda: mpmath.exp(c0),
                "log": lambda: mpmath.log(c0),
                "sqrt": lambda: mpmath.sqrt(c0),
                "reciprocal": lambda: 1 / c0,
                "power": lambda: mpmath.power(c0, alpha),
            }[fn]()
            base = np.array([base], dtype=object)
        else:
            if fn in ("log", "sqrt", "power") and c[0].real <= 0:
                raise ConvergenceError(f"{fn}: center value has Re <= 0")
            inv = _jet_fn("reciprocal", c.astype(complex))
            base = _jet_fn(fn, c.astype(complex), alpha)
        w = f.jet_scale(inv) - 1 if ring.size > 1 else f * inv[0] - 1
        if fn == "exp":
            w = w.jet_scale(c) if ring.size > 1 else w * c[0]
        r = majorant_norm(w, band)
        if r >= CENTER_SAFETY:
            raise ConvergenceError(f"{fn}: centered majorant {r:.3f} >= {CENTER_SAFETY}")
        # coefficients of fn(c(1+w))/fn(c) as a power series in w
        if fn == "exp":
            coef = lambda k: 1.0 / math.factorial(k)
        elif fn == "log":
            coef = lambda k: 0.0 if k == 0 else (-1.0) ** (k + 1) / k
        elif fn == "sqrt":
            coef = lambda k: _gbinom(0.5, k)
        elif fn == "reciprocal":
            coef = lambda k: (-1.0) ** k
        else:
            coef = lambda k: _gbinom(alpha, k)
        if ring.is_big:
            if fn == "exp":
                coef = lambda k: 1 / mpmath.factorial(k)
            elif fn == "log":
                coef = lambda k: mpmath.mpf(0) if k == 0 else mpmath.mpf((-1) ** (k + 1)) / k
            elif fn in ("sqrt", "power"):
                al = mpmath.mpf(0.5 if fn == "sqrt" else alpha)
                coef = lambda k: mpmath.binomial(al, k)
        eps = ring.eps
        acc = HermitianSeries.constant(0, f.N, f.R, ring).with_valid(f.valid)
        term = HermitianSeries.constant(1, f.N, f.R, ring).with_valid(f.valid)
        kmax = 10 if r == 0 else int(math.log(eps) / math.log(max(r, 1e-300))) + 20
        for k in range(0, max(kmax, 2) + 1):
            acc = acc + term * coef(k)
            term = term * w
        if fn == "log":
            return acc + (base if ring.size > 1 else base[0])
        if ring.size > 1:
            return acc.jet_scale(base)
        return acc * base[0]


def _gbinom(a, k):
    out = 1.0
    for i in range(k):
        out *= (a - i) / (i + 1)
    return out


class _nullctx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


# ---------------------------------------------------------------------------
# holomorphic Laurent series in zeta (exterior map, scrQ)


@dataclass(frozen=True)
class Laurent:
    """Finite Laurent sum sum_k c_k zeta**k (holomorphic in |zeta| > r0)."""

    coeffs: dict

    def __call__(self, zeta):
        z = np.asarray(zeta, dtype=complex)
        out = np.zeros_like(z)
        for k, c in self.coeffs.items():
            out = out + c * z**k
        return out

    def deriv(self):
        return Laurent({k - 1: k * c for k, c in self.coeffs.items() if k != 0})

    def hermitian(self, N, R, ring=None, conjugate=False):
        return HermitianSeries.from_holomorphic(self.coeffs, N, R, ring, conjugate)

    @property
    def top(self):
        return max(self.coeffs)

    @property
    def bottom(self):
        return min(self.coeffs)
