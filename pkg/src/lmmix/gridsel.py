"""Choosing the fixed grid of anchor means.

Within an interval [mu0 - eps1, mu0 + eps2] the fourth-order Taylor
expansion in the mean leaves a remainder of at most
(mu - mu0)**5 / 5! * M, where M bounds the fifth mean-derivative of the
density. The budget used here is

    (eps1 + eps2) * eps**5 * M / 120 <= delta,   eps = max(eps1, eps2),

which with eps1 = eps2 = eps inverts to eps = (60 delta / M) ** (1/6).

For the normal family M depends only on sigma. For the binomial family it
is the largest value of max(|L(n, m)|, U(n, m)) * p(x*; n, m) over a
1024-point grid of m on the interval, so the spacing varies along the
range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError, DomainError, PreconditionError, ResourceError
from .expfam import (
    BaseFamily,
    BinomialFamily,
    NormalFamily,
    binomial_remainder_envelope,
    check_mean,
    density,
    normal_fifth_derivative_bound,
    q_values,
)
from .lmm import Status, feasibility

MAX_GRID_POINTS = 10**6
M_GRID_POINTS = 1024


@dataclass(frozen=True)
class ToleranceBudget:
    delta: float
    epsilon1: float
    epsilon2: float

    def __post_init__(self):
        if not (self.delta > 0 and self.epsilon1 > 0 and self.epsilon2 > 0):
            raise ArgumentError("delta, epsilon1 and epsilon2 must be positive")

    @property
    def epsilon(self) -> float:
        return max(self.epsilon1, self.epsilon2)

    def remainder_bound(self, M: float) -> float:
        return taylor_budget(self.epsilon1, self.epsilon2, M)

    def holds(self, M: float) -> bool:
        return self.remainder_bound(M) <= self.delta * (1 + 1e-12)


@dataclass
class GridSpec:
    """Anchor means, their covering intervals and the derivative bounds used.

    ``intervals[l]`` is ``(lo, hi)`` around ``points[l]``; ``bounds[l]`` is
    the M used for that interval and ``epsilons[l]`` its ``(eps1, eps2)``.
    """

    points: list
    intervals: list
    family: BaseFamily
    budget: Optional[ToleranceBudget]
    bounds: list = field(default_factory=list)
    epsilons: list = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    @classmethod
    def from_points(cls, family: BaseFamily, points: Sequence[float]) -> "GridSpec":
        """A user-supplied grid; intervals split at midpoints between neighbours."""
        pts = [check_mean(family, p) for p in points]
        if not pts or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ArgumentError("grid points must be a nonempty strictly increasing list")
        mids = [0.5 * (a + b) for a, b in zip(pts, pts[1:])]
        los = [pts[0] - (mids[0] - pts[0] if mids else 0.0)] + mids
        his = mids + [pts[-1] + (pts[-1] - mids[-1] if mids else 0.0)]
        return cls(pts, list(zip(los, his)), family, None)


def taylor_budget(eps1: float, eps2: float, M: float) -> float:
    """(eps1 + eps2) * max(eps1, eps2)**5 * M / 5!."""
    eps = max(eps1, eps2)
    return (eps1 + eps2) * eps**5 * M / 120.0


def _check_region(family: BaseFamily, region) -> tuple:
    a, b = (float(v) for v in region)
    if b < a:
        raise ArgumentError(f"empty region [{a}, {b}]")
    if isinstance(family, BinomialFamily) and not (0.0 < a and b < family.n):
        raise DomainError(f"binomial region must lie strictly inside (0, {family.n})")
    return a, b


def binomial_fifth_derivative_bound(n: int, region) -> float:
    """max over a 1024-point m-grid of max(|L|, U)(n, m) * p(x*; n, m)."""
    a, b = _check_region(BinomialFamily(n), region)
    fam = BinomialFamily(n)
    best = 0.0
    for m in np.linspace(a, b, M_GRID_POINTS) if b > a else [a]:
        env = binomial_remainder_envelope(n, m)
        best = max(best, max(-env.lower, env.upper) * density(fam, env.x_star, m))
    return float(best)


def fifth_derivative_bound(family: BaseFamily, region) -> float:
    if isinstance(family, NormalFamily):
        return normal_fifth_derivative_bound(family.sigma)
    return binomial_fifth_derivative_bound(family.n, region)


def _epsilon(delta: float, M: float) -> float:
    return (60.0 * delta / M) ** (1.0 / 6.0)


def epsilon_for_delta(family: BaseFamily, mu_region, delta: float) -> float:
    """Half-width eps with 2 eps**6 M / 120 = delta for M bounded over ``mu_region``."""
    if not delta > 0:
        raise ArgumentError(f"delta must be positive, got {delta!r}")
    region = _check_region(family, mu_region)
    return _epsilon(delta, fifth_derivative_bound(family, region))


def _binomial_local_epsilon(family: BinomialFamily, left: float, delta: float) -> tuple:
    """(eps, M) for the interval starting at ``left``, one fixed-point pass.

    The first guess uses M at ``left`` alone; M is then recomputed over
    [left, left + 2 eps0]. Taking the smaller of the two half-widths keeps
    the budget valid either way.
    """
    upper = family.n * (1 - 1e-9)
    M0 = binomial_fifth_derivative_bound(family.n, (left, left))
    eps0 = _epsilon(delta, M0)
    M1 = binomial_fifth_derivative_bound(family.n, (left, min(left + 2 * eps0, upper)))
    eps1 = _epsilon(delta, M1)
    if eps1 <= eps0:
        # the m-grid moves with the region, so keep the larger sampled bound
        M2 = max(M1, binomial_fifth_derivative_bound(family.n, (left, min(left + 2 * eps1, upper))))
        return _epsilon(delta, M2), M2
    return eps0, M1


def local_epsilon(family: BaseFamily, mu0: float, delta: float) -> tuple:
    """(eps, M) for the symmetric interval [mu0 - eps, mu0 + eps].

    For the binomial the interval is also kept inside (0, n).
    """
    if not delta > 0:
        raise ArgumentError(f"delta must be positive, got {delta!r}")
    mu0 = check_mean(family, mu0)
    if isinstance(family, NormalFamily):
        M = normal_fifth_derivative_bound(family.sigma)
        return _epsilon(delta, M), M
    n = family.n
    cap = 0.999 * min(mu0, n - mu0)
    M0 = binomial_fifth_derivative_bound(n, (mu0, mu0))
    eps0 = min(_epsilon(delta, M0), cap)
    M1 = binomial_fifth_derivative_bound(n, (mu0 - eps0, mu0 + eps0))
    eps1 = min(_epsilon(delta, M1), cap)
    if eps1 <= eps0:
        M2 = max(M1, binomial_fifth_derivative_bound(n, (mu0 - eps1, mu0 + eps1)))
        return min(_epsilon(delta, M2), cap), M2
    return eps0, M1


def build_grid(family: BaseFamily, mu_range, delta: float) -> GridSpec:
    """Greedy left-to-right cover of ``mu_range`` by intervals of width 2 eps.

    Intervals are clipped to the range; when the last piece is shorter
    than 2 eps its anchor is put at the midpoint.
    """
    if not delta > 0:
        raise ArgumentError(f"delta must be positive, got {delta!r}")
    a, b = _check_region(family, mu_range)

    if isinstance(family, NormalFamily):
        M = normal_fifth_derivative_bound(family.sigma)
        eps = _epsilon(delta, M)
        count = max(1, math.ceil((b - a) / (2 * eps) - 1e-12))
        if count > MAX_GRID_POINTS:
            raise ResourceError(f"grid would need {count} points; raise delta")
        if b == a:
            return GridSpec([a], [(a - eps, a + eps)], family,
                            ToleranceBudget(delta, eps, eps), [M], [(eps, eps)])
        points, intervals, epsilons = [], [], []
        for i in range(count):
            lo = a + 2 * i * eps
            hi = min(lo + 2 * eps, b)
            mu = lo + eps if hi - lo >= 2 * eps * (1 - 1e-12) else 0.5 * (lo + hi)
            points.append(mu)
            intervals.append((lo, hi))
            epsilons.append((mu - lo, hi - mu))
        return GridSpec(points, intervals, family, ToleranceBudget(delta, eps, eps),
                        [M] * count, epsilons)

    if b == a:
        eps, M = local_epsilon(family, a, delta)
        return GridSpec([a], [(a - eps, a + eps)], family,
                        ToleranceBudget(delta, eps, eps), [M], [(eps, eps)])
    points, intervals, bounds, epsilons = [], [], [], []
    left = a
    while left < b:
        eps, M = _binomial_local_epsilon(family, left, delta)
        if (b - left) / (2 * eps) + len(points) > MAX_GRID_POINTS:
            raise ResourceError("grid would need more than 1e6 points; raise delta")
        hi = min(left + 2 * eps, b)
        mu = left + eps if hi - left >= 2 * eps * (1 - 1e-12) else 0.5 * (left + hi)
        points.append(mu)
        intervals.append((left, hi))
        bounds.append(M)
        epsilons.append((mu - left, hi - mu))
        left = hi
    eps_max = max(max(e) for e in epsilons)
    return GridSpec(points, intervals, family, ToleranceBudget(delta, eps_max, eps_max),
                    bounds, epsilons)


@dataclass(frozen=True)
class LocalApprox:
    """Result of comparing a finite mixture with its induced local mixture."""

    error: float
    lam: tuple
    status: Status
    eps1: float
    eps2: float

    @property
    def feasible(self) -> bool:
        return self.status is not Status.INFEASIBLE


def induced_lambda(mu0: float, atoms, weights) -> np.ndarray:
    """lam_j = sum_k w_k (mu_k - mu0)**j / j!, the mixing-averaged Taylor coefficients."""
    d = np.asarray(atoms, dtype=float) - mu0
    w = np.asarray(weights, dtype=float)
    return np.array([np.sum(w * d**j) / math.factorial(j) for j in range(1, 5)])


def local_approx_report(family: BaseFamily, mu0: float, atoms, weights, x_grid,
                        eps1: float | None = None, eps2: float | None = None) -> LocalApprox:
    mu0 = check_mean(family, mu0)
    atoms = np.asarray(atoms, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if atoms.shape != weights.shape or atoms.size == 0:
        raise ArgumentError("atoms and weights must be nonempty and of equal length")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ArgumentError("mixing weights must be nonnegative and sum to 1")
    eps1 = float(max(0.0, mu0 - atoms.min())) if eps1 is None else float(eps1)
    eps2 = float(max(0.0, atoms.max() - mu0)) if eps2 is None else float(eps2)
    slack = 1e-12 * max(1.0, abs(mu0))
    if atoms.min() < mu0 - eps1 - slack or atoms.max() > mu0 + eps2 + slack:
        raise PreconditionError("mixing distribution has mass outside [mu0 - eps1, mu0 + eps2]")
    for m in atoms:
        check_mean(family, m)

    lam = induced_lambda(mu0, atoms, weights)
    x = np.asarray(x_grid, dtype=float)
    mixture = sum(w * density(family, x, m) for m, w in zip(atoms, weights))
    # signed: an inadmissible lam can make the expansion negative
    local = density(family, x, mu0) * (1.0 + q_values(family, mu0, x, 4) @ lam)
    error = float(np.max(np.abs(mixture - local)))
    return LocalApprox(error, tuple(lam), feasibility(family, mu0, lam).status, eps1, eps2)


def verify_local_approx(family: BaseFamily, mu0: float, atoms, weights, x_grid,
                        eps1: float | None = None, eps2: float | None = None) -> float:
    """Sup over ``x_grid`` of |sum_k w_k f(x; mu_k) - g(x; lam)| for the induced lam.

    ``atoms``/``weights`` describe a discrete mixing distribution that must
    lie inside [mu0 - eps1, mu0 + eps2] (defaults: the tightest interval).
    """
    return local_approx_report(family, mu0, atoms, weights, x_grid, eps1, eps2).error
