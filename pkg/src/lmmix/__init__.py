"""Discrete mixtures of local mixture models over a fixed grid of means."""

from .emfit import EmConfig, FitReport, InnerConfig, MixtureModel, component_mle, fit, loglik
from .expfam import BinomialFamily, NormalFamily, density, q_polynomial
from .gridsel import GridSpec, build_grid, epsilon_for_delta, verify_local_approx
from .lmm import FeasibilityReport, Lmm, Status, feasibility, lmm_density, max_feasible_step

__version__ = "0.1.0"
