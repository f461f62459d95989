"""Fitting discrete mixtures of local mixture models with component pruning.

The mixture density is h(x) = sum_l rho_l g_l(x; lam_l), where each g_l is
a local mixture anchored at a fixed grid mean mu_l. One outer iteration:

1. responsibilities w_il proportional to rho_l g_l(x_i) and rho_l = mean_i w_il;
2. if some rho_l < gamma, drop those components, renormalize rho and go
   back to 1 without touching lam;
3. otherwise hard-assign each observation to its most responsible
   component and maximize each component's log-likelihood over its
   admissible lam set.

Iteration stops once the relative change of the full log-likelihood falls
below ``tol`` in an iteration without pruning. Because step 3 uses hard
assignments the full log-likelihood is not guaranteed to increase.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .errors import ArgumentError, DegenerateObservation, FitFailure, PreconditionError
from .expfam import BaseFamily, BinomialFamily, NormalFamily, binomial_q_table, check_mean, q_values
from .gridsel import GridSpec
from .lmm import Status, feasibility, is_feasible, lmm_log_density, positivity_coeffs

logger = logging.getLogger(__name__)

__all__ = [
    "Component",
    "MixtureModel",
    "InnerConfig",
    "EmConfig",
    "PruneEvent",
    "FitReport",
    "responsibilities",
    "update_proportions",
    "prune",
    "classify",
    "component_loglik",
    "component_mle",
    "loglik",
    "fit",
]


@dataclass(frozen=True)
class Component:
    rho: float
    mu: float
    family: BaseFamily
    lam: tuple = (0.0, 0.0, 0.0, 0.0)
    label: int = 0

    def log_density(self, x) -> np.ndarray:
        return lmm_log_density(self.family, self.mu, self.lam, x, check=False)


@dataclass(frozen=True)
class MixtureModel:
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ArgumentError("a mixture needs at least one component")
        if abs(sum(c.rho for c in comps) - 1.0) > 1e-12:
            raise ArgumentError("mixing proportions must sum to 1")

    def __len__(self):
        return len(self.components)

    @property
    def rho(self) -> np.ndarray:
        return np.array([c.rho for c in self.components])

    @property
    def mu(self) -> np.ndarray:
        return np.array([c.mu for c in self.components])

    @property
    def lam(self) -> np.ndarray:
        return np.array([c.lam for c in self.components])

    @property
    def labels(self) -> list:
        return [c.label for c in self.components]

    def with_rho(self, rho) -> "MixtureModel":
        return MixtureModel(tuple(replace(c, rho=float(r)) for c, r in zip(self.components, rho)))

    def component_log_densities(self, x) -> np.ndarray:
        """Matrix log g_l(x_i), shape (n, L)."""
        return np.column_stack([c.log_density(x) for c in self.components])

    def density(self, x) -> np.ndarray:
        return np.exp(logsumexp(self.component_log_densities(x) + np.log(self.rho), axis=1))

    @classmethod
    def uniform(cls, mus: Sequence[float], families, lambdas=None) -> "MixtureModel":
        """Equal proportions on a strictly increasing grid of means."""
        L = len(mus)
        if L == 0 or any(b <= a for a, b in zip(mus, mus[1:])):
            raise ArgumentError("grid means must be a nonempty strictly increasing list")
        if isinstance(families, (NormalFamily, BinomialFamily)):
            families = [families] * L
        if len(families) != L:
            raise ArgumentError("need one family per grid point")
        lambdas = [(0.0, 0.0, 0.0, 0.0)] * L if lambdas is None else lambdas
        comps = []
        for i, (m, fam, lam) in enumerate(zip(mus, families, lambdas)):
            check_mean(fam, m)
            comps.append(Component(1.0 / L, float(m), fam, tuple(float(v) for v in lam), i))
        rho = np.full(L, 1.0 / L)
        return cls(tuple(comps)).with_rho(rho / rho.sum())


@dataclass(frozen=True)
class InnerConfig:
    tol: float = 1e-9
    max_iter: int = 200


@dataclass(frozen=True)
class EmConfig:
    gamma: float = 0.15
    tol: float = 1e-8
    max_iter: int = 500
    inner: InnerConfig = field(default_factory=InnerConfig)
    seed: int = 0  # unused; the fit is deterministic

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ArgumentError(f"gamma must lie in (0, 1), got {self.gamma!r}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ArgumentError("tol must be positive and max_iter at least 1")


class PruneEvent(NamedTuple):
    iteration: int
    indices: tuple
    reason: str


@dataclass
class FitReport:
    model: MixtureModel
    loglik_trace: list
    pruning_history: list
    assignments: np.ndarray
    converged: bool
    iterations: int

    @property
    def order(self) -> int:
        return len(self.model)

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]


def _weighted_log(model: MixtureModel, data) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logw = model.component_log_densities(data) + np.log(model.rho)
    return logw


def _row_norm(logw: np.ndarray, data) -> np.ndarray:
    lse = logsumexp(logw, axis=1)
    bad = np.flatnonzero(~np.isfinite(lse))
    if bad.size:
        i = int(bad[0])
        raise DegenerateObservation(i, np.atleast_1d(data)[i])
    return lse


def responsibilities(model: MixtureModel, data) -> np.ndarray:
    """w[i, l] = rho_l g_l(x_i) / sum_k rho_k g_k(x_i), computed in log space."""
    logw = _weighted_log(model, data)
    lse = _row_norm(logw, data)
    return np.exp(logw - lse[:, None])


def update_proportions(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] == 0:
        raise ArgumentError("responsibility matrix must be (n, L) with n > 0")
    rho = w.sum(axis=0) / w.shape[0]
    return rho / rho.sum()


def prune(model: MixtureModel, rho, gamma: float):
    """Drop components with rho < gamma; returns (model, dropped positions).

    Surviving proportions are renormalized.
    """
    if not 0.0 < gamma < 1.0:
        raise ArgumentError(f"gamma must lie in (0, 1), got {gamma!r}")
    rho = np.asarray(rho, dtype=float)
    keep = rho >= gamma
    dropped = tuple(int(i) for i in np.flatnonzero(~keep))
    if not keep.any():
        raise FitFailure(f"every component has proportion below gamma={gamma}; use a smaller gamma")
    kept = rho[keep] / rho[keep].sum()
    comps = [replace(c, rho=float(r)) for c, r in zip(np.array(model.components, dtype=object)[keep], kept)]
    return MixtureModel(tuple(comps)), dropped


def classify(w: np.ndarray) -> np.ndarray:
    """Index of the most responsible component per row; ties go to the lowest index."""
    return np.argmax(np.asarray(w), axis=1)


def component_loglik(family: BaseFamily, mu: float, data, lam) -> float:
    """sum_i log g_mu(x_i; lam); ``-inf`` if some observation has zero density."""
    return float(np.sum(lmm_log_density(family, mu, lam, data, check=False)))


def loglik(model: MixtureModel, data) -> float:
    """Observed-data log-likelihood sum_i log h(x_i)."""
    return float(np.sum(_row_norm(_weighted_log(model, data), data)))


# -- inner solver -----------------------------------------------------------
#
# Normal family: a quartic in u is nonnegative on the line exactly when it is
# a sum of squares, i.e. P(u) = z' X z with z = (1, u, u^2) and X PSD. With
# coefficients c0..c4 the Gram matrix is affine in (lam, t):
#
#     X = [[c0, c1/2, t], [c1/2, c2 - 2t, c3/2], [t, c3/2, c4]]
#
# so -log det X is an exact barrier for the admissible set lifted by t.
# Binomial family: the set is a polytope and each count x contributes
# -log(1 + q(x) . lam).

_CENTRE = np.array([0.0, 0.0, 0.0, 1.0 / 12.0])


def _gram_basis(sigma: float):
    """(X0, [A_1..A_4, A_t]) with X(lam, t) = X0 + sum_p v_p A_p."""
    def gram(c, t):
        return np.array([[c[0], c[1] / 2, t], [c[1] / 2, c[2] - 2 * t, c[3] / 2], [t, c[3] / 2, c[4]]])

    zero = np.zeros(4)
    c0 = positivity_coeffs(sigma, zero)
    X0 = gram(c0, 0.0)
    mats = [gram(positivity_coeffs(sigma, e) - c0, 0.0) for e in np.eye(4)]
    mats.append(gram(np.zeros(5), 1.0))
    return X0, mats


def _lift(X0, mats, lam) -> Optional[float]:
    """A t making X(lam, t) positive definite, or None."""
    base = X0 + sum(l * A for l, A in zip(lam, mats[:4]))
    bound = math.sqrt(max(base[0, 0] * base[2, 2], 0.0))
    if bound == 0.0:
        return None
    res = minimize_scalar(lambda t: -np.linalg.eigvalsh(base + t * mats[4])[0],
                          bounds=(-bound, bound), method="bounded", options={"xatol": 1e-12 * bound})
    return float(res.x) if -res.fun > 0 else None


def _chol_ok(X) -> bool:
    try:
        np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return False
    return True


def _newton_barrier(v, loglik_terms, barrier_terms, n, inner: InnerConfig):
    """Maximize loglik(v) + tau * barrier(v) along a decreasing tau path.

    ``loglik_terms(v)`` and ``barrier_terms(v)`` return (value, grad, hess),
    with value -inf outside the domain.
    """
    tau = 0.1 * max(n, 1)
    tau_min = 1e-11 * max(n, 1)
    steps = 0
    while steps < inner.max_iter:
        while steps < inner.max_iter:
            f_l, g_l, h_l = loglik_terms(v)
            f_b, g_b, h_b = barrier_terms(v)
            f0 = f_l + tau * f_b
            grad = g_l + tau * g_b
            neg_hess = -(h_l + tau * h_b)
            neg_hess += 1e-14 * np.trace(neg_hess) * np.eye(v.size)
            try:
                step = np.linalg.solve(neg_hess, grad)
            except np.linalg.LinAlgError:
                step = grad
            decrement = float(grad @ step)
            if not decrement > 2.0 * inner.tol * max(1.0, abs(f0)):
                break
            steps += 1
            t = 1.0
            while t > 1e-16:
                trial = v + t * step
                ft = loglik_terms(trial)[0] + tau * barrier_terms(trial)[0]
                if ft >= f0 + 1e-4 * t * decrement:
                    break
                t *= 0.5
            else:
                break
            v = trial
        if tau <= tau_min:
            break
        tau = max(0.1 * tau, tau_min)
    return v


def _loglik_terms(Q):
    def terms(v):
        r = 1.0 + Q @ v[:4]
        k = v.size
        if np.any(r <= 0):
            return -math.inf, None, None
        grad = np.zeros(k)
        hess = np.zeros((k, k))
        Qr = Q / r[:, None]
        grad[:4] = Qr.sum(axis=0)
        hess[:4, :4] = -Qr.T @ Qr
        return float(np.sum(np.log(r))), grad, hess
    return terms


def _normal_mle(family: NormalFamily, mu: float, Q, lam0, inner: InnerConfig):
    X0, mats = _gram_basis(family.sigma)
    if feasibility(family, mu, lam0).margin < 1e-8 or positivity_coeffs(family.sigma, lam0)[4] <= 0:
        # on or next to the boundary (possibly the face c4 = 0): move towards a strictly positive quartic
        lam0 = lam0 + 1e-3 * (_CENTRE - lam0)
    t0 = _lift(X0, mats, lam0)
    if t0 is None:
        lam0 = lam0 + 1e-2 * (_CENTRE - lam0)
        t0 = _lift(X0, mats, lam0)
    if t0 is None:
        return None

    def barrier(v):
        X = X0 + sum(p * A for p, A in zip(v, mats))
        try:
            L = np.linalg.cholesky(X)
        except np.linalg.LinAlgError:
            return -math.inf, None, None
        Xinv = np.linalg.inv(X)
        B = [Xinv @ A for A in mats]
        grad = np.array([np.trace(b) for b in B])
        hess = -np.array([[np.sum(bi * bj.T) for bj in B] for bi in B])
        return 2.0 * float(np.sum(np.log(np.diag(L)))), grad, hess

    v = _newton_barrier(np.append(lam0, t0), _loglik_terms(Q), barrier, Q.shape[0], inner)
    return v[:4]


def _binomial_mle(family: BinomialFamily, mu: float, Q, lam0, inner: InnerConfig):
    A = binomial_q_table(family.n, mu, 4)

    def barrier(v):
        s = 1.0 + A @ v
        if np.any(s <= 0):
            return -math.inf, None, None
        As = A / s[:, None]
        return float(np.sum(np.log(s))), As.sum(axis=0), -As.T @ As

    return _newton_barrier(np.asarray(lam0, dtype=float), _loglik_terms(Q), barrier, Q.shape[0], inner)


def component_mle(family: BaseFamily, mu: float, data, lambda_init=None,
                  inner: InnerConfig = InnerConfig()) -> np.ndarray:
    """Maximize sum_i log g_mu(x_i; lam) over the admissible lam set.

    The objective is concave in lam. It is maximized by damped Newton
    steps on the objective plus a logarithmic barrier for the admissible
    set, whose weight shrinks by 10 per stage down to 1e-11 n. Every
    iterate stays strictly admissible. The result never has a lower
    log-likelihood than ``lambda_init``.
    """
    data = np.atleast_1d(np.asarray(data, dtype=float))
    if data.size == 0:
        raise PreconditionError("component_mle needs at least one observation")
    lam0 = np.zeros(4) if lambda_init is None else np.asarray(lambda_init, dtype=float).reshape(4).copy()
    status = feasibility(family, mu, lam0).status
    if status is Status.INFEASIBLE:
        raise PreconditionError("lambda_init is outside the admissible set")
    Q = q_values(family, mu, data, 4)
    r0 = 1.0 + Q @ lam0
    if status is Status.INTERIOR and not np.all(r0 > 0):
        raise FitFailure("log-likelihood is not finite at the initial lambda")
    with np.errstate(divide="ignore", invalid="ignore"):
        start_ll = float(np.sum(np.log(np.maximum(r0, 0.0))))

    start = lam0
    if isinstance(family, NormalFamily):
        lam = _normal_mle(family, mu, Q, start, inner)
    else:
        if status is Status.BOUNDARY:
            # a previous optimum on a face; zero is interior for the binomial
            start = (1.0 - 1e-3) * lam0
        lam = _binomial_mle(family, mu, Q, start, inner)
    if lam is None or not is_feasible(family, mu, lam):
        return lam0
    with np.errstate(divide="ignore", invalid="ignore"):
        final_ll = float(np.sum(np.log(1.0 + Q @ lam)))
    if not final_ll >= start_ll:
        logger.debug("inner solve did not improve on its start; keeping lambda_init")
        return lam0
    return lam


# -- outer loop -------------------------------------------------------------

def _initial_model(grid, family, lambda_init) -> MixtureModel:
    if isinstance(grid, MixtureModel):
        return grid
    if isinstance(grid, GridSpec):
        mus = grid.points
        family = grid.family if family is None else family
    else:
        mus = [float(m) for m in grid]
    if family is None:
        raise ArgumentError("a family (or one per grid point) is required with an explicit grid")
    return MixtureModel.uniform(mus, family, lambda_init)


def _check_data(model: MixtureModel, data) -> np.ndarray:
    x = np.atleast_1d(np.asarray(data, dtype=float))
    if x.size == 0:
        raise ArgumentError("no observations")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("observations must be finite")
    return x


def fit(data, grid, config: EmConfig = EmConfig(), family=None, lambda_init=None) -> FitReport:
    """Fit a discrete mixture of local mixtures on a fixed grid of means.

    ``grid`` is a GridSpec, a sequence of means (then ``family`` is one
    family or one per mean) or a starting MixtureModel. Proportions start
    uniform and lam at zero unless ``lambda_init`` gives one 4-vector per
    grid point.
    """
    model = _initial_model(grid, family, lambda_init)
    x = _check_data(model, data)
    for c in model.components:
        if feasibility(c.family, c.mu, c.lam).status is not Status.INTERIOR:
            raise ArgumentError(f"initial lambda for component at mu={c.mu} is not interior")

    trace = [loglik(model, x)]
    history: list = []
    converged = False
    pruned_since_last = False
    it = 0
    while it < config.max_iter:
        it += 1
        w = responsibilities(model, x)
        rho = update_proportions(w)
        model = model.with_rho(rho)
        if np.any(rho < config.gamma):
            labels = model.labels
            model, dropped = prune(model, rho, config.gamma)
            history.append(PruneEvent(it, tuple(labels[i] for i in dropped), "gamma"))
            logger.debug("iteration %d: pruned %s", it, history[-1].indices)
            pruned_since_last = True
            continue

        assign = classify(w)
        empty = [l for l in range(len(model)) if not np.any(assign == l)]
        if empty:
            keep = [l for l in range(len(model)) if l not in empty]
            if not keep:
                raise FitFailure("every class is empty")
            history.append(PruneEvent(it, tuple(model.components[l].label for l in empty), "empty-class"))
            comps = [model.components[l] for l in keep]
            rho_kept = np.array([c.rho for c in comps])
            model = MixtureModel(tuple(comps)).with_rho(rho_kept / rho_kept.sum())
            pruned_since_last = True
            continue

        comps = []
        for l, c in enumerate(model.components):
            lam = component_mle(c.family, c.mu, x[assign == l], c.lam, config.inner)
            comps.append(replace(c, lam=tuple(float(v) for v in lam)))
        model = MixtureModel(tuple(comps))
        ll = loglik(model, x)
        prev = trace[-1]
        trace.append(ll)
        if not pruned_since_last and abs(ll - prev) <= config.tol * max(abs(prev), 1e-300):
            converged = True
            break
        pruned_since_last = False

    assignments = classify(responsibilities(model, x))
    return FitReport(model, trace, history, assignments, converged, it)
