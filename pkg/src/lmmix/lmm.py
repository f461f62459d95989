"""Order-4 local mixture models and the geometry of their parameter space.

A local mixture model anchored at ``mu0`` is

    g(x; lam) = f(x; mu0) * (1 + sum_j lam_j q_j(x; mu0)),   j = 1..4,

and the admissible set of ``lam`` is the convex set on which the bracket,
the positivity polynomial, is nonnegative over the whole sample space.

For the normal family the bracket is a quartic in u = x - mu0 and is
minimized exactly through the real roots of its derivative. For the
binomial family the sample space is finite and the minimum is found by
enumeration.

Moments for the normal family with standard deviation s, obtained from
E_g[h] = E_f[h] + sum_j lam_j d^j/dmu^j E_f[h]:

    mean     = mu0 + lam1
    variance = s**2 + 2 lam2 - lam1**2
    third    = 6 lam3 + 2 lam1**3 - 6 lam1 lam2

The third central moment does not depend on s.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import ConstraintViolation, PreconditionError
from .expfam import (
    BaseFamily,
    BinomialFamily,
    NormalFamily,
    _normal_q_coeffs,
    binomial_q_table,
    check_mean,
    log_density,
    q_values,
)

__all__ = [
    "Lmm",
    "Status",
    "FeasibilityReport",
    "BOUNDARY_TOL",
    "COEFF_TOL",
    "positivity_coeffs",
    "real_cubic_roots",
    "feasibility",
    "is_feasible",
    "lmm_density",
    "lmm_log_density",
    "max_feasible_step",
    "boundary_hyperplane",
    "normal_moments",
]

BOUNDARY_TOL = 1e-10
COEFF_TOL = 1e-14
STEP_CAP = 1e8


class Status(str, enum.Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class FeasibilityReport:
    """Classification of a lambda vector.

    ``argmin`` is None when the positivity polynomial is unbounded below;
    ``min_value`` is then ``-inf``.
    """

    status: Status
    min_value: float
    argmin: Optional[float]
    margin: float

    @property
    def unbounded(self) -> bool:
        return self.argmin is None


def _as_lambda(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape != (4,):
        raise ValueError(f"lambda must have 4 entries, got shape {lam.shape}")
    return lam


@dataclass(frozen=True)
class Lmm:
    family: BaseFamily
    mu0: float
    lam: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        check_mean(self.family, self.mu0)
        object.__setattr__(self, "lam", tuple(float(v) for v in _as_lambda(self.lam)))

    def density(self, x):
        return lmm_density(self, x)


def positivity_coeffs(sigma: float, lam) -> np.ndarray:
    """Coefficients c0..c4 of 1 + sum lam_j q_j in powers of u = x - mu0 (normal)."""
    lam = _as_lambda(lam)
    c = np.zeros(5)
    c[0] = 1.0
    for j, qc in enumerate(_normal_q_coeffs(float(sigma), 5)[:4]):
        c[: len(qc)] += lam[j] * np.asarray(qc)
    return c


def real_cubic_roots(a: float, b: float, c: float, d: float) -> list:
    """Real roots of a x^3 + b x^2 + c x + d with a != 0.

    Cardano for a single real root, the trigonometric form for three; each
    root gets one Newton step.
    """
    b, c, d = b / a, c / a, d / a
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0:
        s = math.sqrt(disc)
        roots = [np.cbrt(-q / 2.0 + s) + np.cbrt(-q / 2.0 - s)]
    elif p == 0.0:
        roots = [0.0]
    else:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * r)
        arg = min(1.0, max(-1.0, arg))
        phi = math.acos(arg) / 3.0
        roots = [r * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)]
    out = []
    for t in roots:
        x = t - shift
        f = ((x + b) * x + c) * x + d
        fp = (3.0 * x + 2.0 * b) * x + c
        if fp != 0.0:
            x -= f / fp
        out.append(float(x))
    return out


def _classify(min_value: float, argmin) -> FeasibilityReport:
    if min_value > BOUNDARY_TOL:
        return FeasibilityReport(Status.INTERIOR, min_value, argmin, min_value)
    if min_value >= -BOUNDARY_TOL:
        return FeasibilityReport(Status.BOUNDARY, min_value, argmin, 0.0)
    return FeasibilityReport(Status.INFEASIBLE, min_value, argmin, 0.0)


_UNBOUNDED = FeasibilityReport(Status.INFEASIBLE, -math.inf, None, 0.0)


def _normal_minimum(c: np.ndarray):
    """(min over u, argmin u) of the quartic with coefficients ``c``; argmin None if unbounded."""
    c = np.where(np.abs(c) <= COEFF_TOL, 0.0, c)
    c0, c1, c2, c3, c4 = c
    if c4 != 0.0:
        if c4 < 0:
            return -math.inf, None
        crit = real_cubic_roots(4.0 * c4, 3.0 * c3, 2.0 * c2, c1)
        vals = npoly.polyval(np.asarray(crit), c)
        i = int(np.argmin(vals))
        return float(vals[i]), crit[i]
    if c3 != 0.0:
        return -math.inf, None
    if c2 != 0.0:
        if c2 < 0:
            return -math.inf, None
        u = -c1 / (2.0 * c2)
        return float(c0 - c1 * c1 / (4.0 * c2)), u
    if c1 != 0.0:
        return -math.inf, None
    return float(c0), 0.0


def feasibility(family: BaseFamily, mu0: float, lam) -> FeasibilityReport:
    """Locate ``lam`` relative to the admissible set at ``mu0``."""
    mu0 = check_mean(family, mu0)
    lam = _as_lambda(lam)
    if not np.all(np.isfinite(lam)):
        return _UNBOUNDED
    if isinstance(family, NormalFamily):
        value, u = _normal_minimum(positivity_coeffs(family.sigma, lam))
        if u is None:
            return _UNBOUNDED
        return _classify(value, mu0 + u)
    vals = 1.0 + binomial_q_table(family.n, mu0, 4) @ lam
    i = int(np.argmin(vals))
    return _classify(float(vals[i]), i)


def is_feasible(family: BaseFamily, mu0: float, lam) -> bool:
    """True when ``lam`` is in the closed admissible set (interior or boundary)."""
    return feasibility(family, mu0, lam).status is not Status.INFEASIBLE


def _positivity_values(family: BaseFamily, mu0: float, lam, x) -> np.ndarray:
    return 1.0 + q_values(family, mu0, x, 4) @ _as_lambda(lam)


def lmm_log_density(family: BaseFamily, mu0: float, lam, x, check: bool = True):
    """Log of the local mixture density; ``-inf`` where the density touches zero.

    With ``check=False`` the admissibility of ``lam`` is not verified.
    """
    if check and not is_feasible(family, mu0, lam):
        raise ConstraintViolation(f"lambda {tuple(np.asarray(lam, float))} is outside the parameter space at mu0={mu0}")
    x = np.atleast_1d(x)
    p = _positivity_values(family, mu0, lam, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), -np.inf)
    return log_density(family, x, mu0) + logp


def lmm_density(model: Lmm, x):
    """Evaluate f(x; mu0) * (1 + sum lam_j q_j(x; mu0)).

    Raises ConstraintViolation if ``model.lam`` is not admissible.
    """
    scalar = np.ndim(x) == 0
    out = np.exp(lmm_log_density(model.family, model.mu0, model.lam, x))
    return float(out[0]) if scalar else out


def _binomial_step(family: BinomialFamily, mu0: float, start: np.ndarray, direction: np.ndarray) -> float:
    table = binomial_q_table(family.n, mu0, 4)
    base = 1.0 + table @ start
    rate = table @ direction
    shrinking = rate < 0
    if not np.any(shrinking):
        return math.inf
    return float(np.min(base[shrinking] / -rate[shrinking]))


def max_feasible_step(family: BaseFamily, mu0: float, start, direction) -> float:
    """Largest t >= 0 with ``start + t * direction`` admissible.

    ``start`` must be interior. The normal case bisects on feasibility after
    doubling the bracket; the binomial case is a ratio test over the n + 1
    linear constraints. Returns ``inf`` when every step up to 1e8 is
    admissible.
    """
    start = _as_lambda(start)
    direction = _as_lambda(direction)
    if feasibility(family, mu0, start).status is not Status.INTERIOR:
        raise PreconditionError("line search must start from an interior point")
    if not np.any(direction):
        return math.inf
    if isinstance(family, BinomialFamily):
        return _binomial_step(family, mu0, start, direction)

    c_start = positivity_coeffs(family.sigma, start)
    c_dir = positivity_coeffs(family.sigma, direction) - np.eye(5)[0]

    def ok(t):
        value, u = _normal_minimum(c_start + t * c_dir)
        return u is not None and value >= 0.0

    lo, hi = 0.0, 1.0
    while ok(hi):
        lo, hi = hi, 2.0 * hi
        if hi > STEP_CAP:
            return math.inf
    while hi - lo > 1e-14 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def boundary_hyperplane(family: BaseFamily, mu0: float, x) -> np.ndarray:
    """Affine coefficients (1, q1(x), ..., q4(x)) of the hyperplane where g(x) = 0."""
    return np.concatenate(([1.0], q_values(family, mu0, [x], 4)[0]))


def normal_moments(lam, mu0: float, sigma0: float = 1.0) -> tuple:
    """(mean, variance, third central moment) of a normal-family local mixture."""
    l1, l2, l3, _ = _as_lambda(lam)
    mean = mu0 + l1
    var = sigma0**2 + 2.0 * l2 - l1**2
    third = 6.0 * l3 + 2.0 * l1**3 - 6.0 * l1 * l2
    return float(mean), float(var), float(third)
