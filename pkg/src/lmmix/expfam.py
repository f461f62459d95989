"""Base exponential families parameterized by their mean.

Two families are supported: a normal with known standard deviation and a
binomial with a known number of trials. For both, the ratio of the j-th
derivative in the mean to the density itself,

    q_j(x; mu) = (d^j/dmu^j f(x; mu)) / f(x; mu),

is a polynomial of degree j in x. These ratios define the local mixture
density and its positivity constraints.

Normal q_j are scaled probabilists' Hermite polynomials in the centred
variable u = x - mu, i.e. q_j(u) = sigma**-j He_j(u / sigma). They are
generated by the recurrence q_{j+1}(u) = u q_j(u) / sigma**2 - q_j'(u) and
stored in powers of u.

The fifth derivative of the normal density in its mean is

    f5(x; m) = (y**5 - 10 y**3 / s**2 + 15 y / s**4) exp(-y**2 s**2 / 2) / (sqrt(2 pi) s)

with y = (x - m) / s**2. Note the Gaussian factor: written in y it is
exp(-y**2 s**2 / 2). The variant exp(-y**2 / (2 s**2)) agrees only at
s = 1 and is not a bound for s < 1, so it is not used.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial, floor
from typing import NamedTuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .errors import ArgumentError, DomainError

__all__ = [
    "NormalFamily",
    "BinomialFamily",
    "BaseFamily",
    "QPolynomial",
    "check_mean",
    "density",
    "log_density",
    "q_polynomial",
    "q_values",
    "normal_fifth_derivative",
    "normal_fifth_derivative_bound",
    "BinomialEnvelope",
    "binomial_remainder_envelope",
    "upper_dominates",
]

EXACT_BINOMIAL_MAX_N = 64
MAX_ORDER = 5
_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class NormalFamily:
    """Normal distribution with fixed standard deviation ``sigma``."""

    sigma: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ArgumentError(f"sigma must be positive, got {self.sigma!r}")

    kind = "normal"
    discrete = False


@dataclass(frozen=True)
class BinomialFamily:
    """Binomial distribution with ``n`` trials, parameterized by its mean in (0, n)."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 6:
            raise ArgumentError(f"binomial n must be an integer >= 6, got {self.n!r}")

    kind = "binomial"
    discrete = True

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.n + 1)


BaseFamily = Union[NormalFamily, BinomialFamily]


def check_mean(family: BaseFamily, mu: float) -> float:
    mu = float(mu)
    if not np.isfinite(mu):
        raise DomainError(f"mean must be finite, got {mu!r}")
    if isinstance(family, BinomialFamily) and not 0.0 < mu < family.n:
        raise DomainError(f"binomial mean must lie strictly inside (0, {family.n}), got {mu!r}")
    return mu


def _check_counts(family: BinomialFamily, x) -> np.ndarray:
    xa = np.asarray(x, dtype=float)
    if np.any(xa != np.round(xa)) or np.any(xa < 0) or np.any(xa > family.n):
        raise DomainError(f"binomial observations must be integers in 0..{family.n}")
    return xa.astype(np.int64)


def log_density(family: BaseFamily, x, mu: float):
    """Log density (or log mass) of the base family at ``x``."""
    mu = check_mean(family, mu)
    if isinstance(family, NormalFamily):
        z = (np.asarray(x, dtype=float) - mu) / family.sigma
        out = -0.5 * z * z - np.log(_SQRT_2PI * family.sigma)
    else:
        k = _check_counts(family, x)
        n = family.n
        out = (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
               + k * np.log(mu / n) + (n - k) * np.log1p(-mu / n))
    return out if np.ndim(out) else float(out)


def density(family: BaseFamily, x, mu: float):
    """Density (normal) or probability mass (binomial) at ``x`` with mean ``mu``."""
    out = np.exp(log_density(family, x, mu))
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class QPolynomial:
    """The derivative ratio q_j as a polynomial.

    ``coeffs`` are in increasing powers of ``x - anchor`` when ``centered``
    is true (normal family) and of ``x`` otherwise (binomial family).
    """

    degree: int
    coeffs: tuple
    anchor: float
    centered: bool

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        t = x - self.anchor if self.centered else x
        out = npoly.polyval(t, np.asarray(self.coeffs, dtype=float))
        return out if np.ndim(out) else float(out)


@lru_cache(maxsize=256)
def _normal_q_coeffs(sigma: float, kmax: int) -> tuple:
    """Coefficients of q_1..q_kmax in powers of u = x - mu."""
    s2 = sigma * sigma
    polys = []
    q = np.array([1.0])
    for _ in range(kmax):
        q = npoly.polysub(npoly.polymulx(q) / s2, npoly.polyder(q))
        polys.append(tuple(float(c) for c in q))
    return tuple(polys)


def _poly_mul(a: list, b: list) -> list:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        for k, bk in enumerate(b):
            out[i + k] += ai * bk
    return out


def _binomial_q_coeffs_exact(n: int, mu: Fraction, j: int) -> list:
    # Leibniz rule on mu**x (n - mu)**(n - x); falling factorials expanded in x.
    total = [Fraction(0)] * (j + 1)
    for k in range(j + 1):
        poly = [Fraction(1)]
        for i in range(k):
            poly = _poly_mul(poly, [Fraction(-i), Fraction(1)])
        for i in range(j - k):
            poly = _poly_mul(poly, [Fraction(n - i), Fraction(-1)])
        scale = Fraction(comb(j, k) * (-1) ** (j - k)) / (mu**k * (n - mu) ** (j - k))
        for d, c in enumerate(poly):
            total[d] += scale * c
    return total


def q_polynomial(family: BaseFamily, mu: float, j: int) -> QPolynomial:
    """Return q_j(x; mu) = f^(j)(x; mu) / f(x; mu) for ``1 <= j <= 5``."""
    if int(j) != j or not 1 <= j <= MAX_ORDER:
        raise ArgumentError(f"derivative order must be in 1..{MAX_ORDER}, got {j!r}")
    j = int(j)
    mu = check_mean(family, mu)
    if isinstance(family, NormalFamily):
        coeffs = _normal_q_coeffs(float(family.sigma), MAX_ORDER)[j - 1]
        return QPolynomial(j, coeffs, mu, True)
    coeffs = _binomial_q_coeffs_exact(family.n, Fraction(mu), j)
    return QPolynomial(j, tuple(float(c) for c in coeffs), mu, False)


def _falling(a, k: int):
    out = np.ones_like(a, dtype=float) if isinstance(a, np.ndarray) else 1
    for i in range(k):
        out = out * (a - i)
    return out


@lru_cache(maxsize=1024)
def _binomial_q_table_exact(n: int, mu: float, kmax: int) -> np.ndarray:
    m = Fraction(mu)
    table = np.empty((n + 1, kmax))
    for x in range(n + 1):
        for j in range(1, kmax + 1):
            val = Fraction(0)
            for k in range(j + 1):
                val += (Fraction(comb(j, k) * (-1) ** (j - k) * _falling(x, k) * _falling(n - x, j - k))
                        / (m**k * (n - m) ** (j - k)))
            table[x, j - 1] = float(val)
    table.setflags(write=False)
    return table


def _binomial_q_table_float(n: int, mu: float, kmax: int) -> np.ndarray:
    x = np.arange(n + 1, dtype=float)
    table = np.empty((n + 1, kmax))
    for j in range(1, kmax + 1):
        val = np.zeros(n + 1)
        for k in range(j + 1):
            val += (comb(j, k) * (-1) ** (j - k) * _falling(x, k) * _falling(n - x, j - k)
                    / (mu**k * (n - mu) ** (j - k)))
        table[:, j - 1] = val
    return table


def binomial_q_table(n: int, mu: float, kmax: int = 4) -> np.ndarray:
    """Values q_j(x; mu) for x = 0..n (rows) and j = 1..kmax (columns)."""
    if n <= EXACT_BINOMIAL_MAX_N:
        return _binomial_q_table_exact(int(n), float(mu), int(kmax))
    return _binomial_q_table_float(int(n), float(mu), int(kmax))


def q_values(family: BaseFamily, mu: float, x, kmax: int = 4) -> np.ndarray:
    """Matrix of q_1..q_kmax evaluated at each point of ``x``; shape (len(x), kmax)."""
    mu = check_mean(family, mu)
    if isinstance(family, NormalFamily):
        u = np.atleast_1d(np.asarray(x, dtype=float)) - mu
        coeffs = _normal_q_coeffs(float(family.sigma), MAX_ORDER)[:kmax]
        return np.column_stack([npoly.polyval(u, np.asarray(c)) for c in coeffs])
    k = np.atleast_1d(_check_counts(family, x))
    return binomial_q_table(family.n, mu, kmax)[k]


def normal_fifth_derivative(x, m, sigma: float):
    """Fifth derivative in the mean of the normal density with sd ``sigma``."""
    z = (np.asarray(x, dtype=float) - np.asarray(m, dtype=float)) / sigma
    return (z**5 - 10 * z**3 + 15 * z) * np.exp(-0.5 * z * z) / (_SQRT_2PI * sigma**6)


def normal_fifth_derivative_bound(sigma: float) -> float:
    """sup over x, m of |f^(5)(x; m)| for the normal family with sd ``sigma``.

    Maximizes over y = (x - m) / sigma**2 on a fixed 4096-point grid and
    polishes the best cell with a bounded scalar search.
    """
    if not sigma > 0:
        raise ArgumentError(f"sigma must be positive, got {sigma!r}")
    sigma = float(sigma)

    def absf5(y):
        return abs(normal_fifth_derivative(y * sigma * sigma, 0.0, sigma))

    # peaks sit at |y| = z / sigma with z < 3; 8 / sigma covers them at any scale
    half = 8.0 / sigma
    ys = np.linspace(-half, half, 4096)
    vals = np.abs(normal_fifth_derivative(ys * sigma * sigma, 0.0, sigma))
    i = int(np.argmax(vals))
    lo, hi = ys[max(i - 1, 0)], ys[min(i + 1, ys.size - 1)]
    res = minimize_scalar(lambda y: -absf5(y), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * half})
    return float(max(vals[i], -res.fun))


class BinomialEnvelope(NamedTuple):
    lower: float
    upper: float
    x_star: int


def binomial_remainder_envelope(n: int, m: float) -> BinomialEnvelope:
    """Uniform bounds L(n, m) < q_5(x; n, m) < U(n, m) and the modal count x*.

    ``x_star = floor(m (n + 1) / n)`` maximizes the mass function in x.
    """
    BinomialFamily(n)
    m = float(m)
    if not 0.0 < m < n:
        raise DomainError(f"m must lie strictly inside (0, {n}), got {m!r}")
    gamma0 = factorial(5) * comb(n, n - 5)
    lower = -gamma0 / ((n - m) ** 5 * m**4) * (5 * n**4 + 10 * n**2 * m**2 + m**4)
    upper = gamma0 / ((n - m) ** 5 * m**5) * (n**5 + 10 * n**3 * m**2 + 5 * n * m**4 - m**5)
    x_star = min(floor(m * (n + 1) / n), n)
    return BinomialEnvelope(float(lower), float(upper), int(x_star))


def upper_dominates(n: int, m: float) -> bool:
    """Whether U(n, m) >= |L(n, m)|, which holds exactly when m <= n / 2.

    U - |L| is proportional to (n - m)**5 - m**5, so the two are equal at
    m = n / 2.
    """
    return m <= n / 2
