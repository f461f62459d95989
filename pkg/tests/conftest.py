import os
from pathlib import Path

import numpy as np
import pytest

from lmmix.expfam import BinomialFamily, NormalFamily
from lmmix.lmm import Status, feasibility

FIXTURES = Path(__file__).parent / "fixtures"
ACIDITY_GRID = (3.6, 4.2, 4.8, 5.4, 6.0, 6.6, 7.0)


def acidity_path():
    """The acidity data file, or None when it has not been installed."""
    env = os.environ.get("LMMIX_ACIDITY")
    path = Path(env) if env else FIXTURES / "acidity.txt"
    return path if path.is_file() else None


def load_acidity():
    path = acidity_path()
    if path is None:
        pytest.skip("acidity fixture missing: put the 155 values in tests/fixtures/acidity.txt "
                    "or point LMMIX_ACIDITY at them (see tests/fixtures/README.md)")
    from lmmix.kvio import read_observations
    return read_observations(path)


def random_feasible(family, mu0, rng, size, scale=None):
    """Rejection-sample admissible lambdas from a box sized for ``family``."""
    if scale is None:
        if isinstance(family, NormalFamily):
            s = family.sigma
            scale = np.array([0.5 * s, 0.3 * s**2, 0.08 * s**3, 0.1 * s**4])
        else:
            sd = np.sqrt(mu0 * (1 - mu0 / family.n))
            scale = np.array([0.5 * sd, 0.3 * sd**2, 0.08 * sd**3, 0.1 * sd**4])
    lo = -scale.copy()
    if isinstance(family, NormalFamily):
        lo[3] = 0.0
    out = []
    while len(out) < size:
        lam = rng.uniform(lo, scale)
        if feasibility(family, mu0, lam).status is not Status.INFEASIBLE:
            out.append(lam)
    return np.array(out)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def std_normal():
    return NormalFamily(1.0)


@pytest.fixture
def binom10():
    return BinomialFamily(10)
