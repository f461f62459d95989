"""Command-line interface: ``lmmix {fit,density,grid,simulate,check}``.

Options may also come from a flat key-value file given with ``--config``;
command-line flags take precedence over the file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import kvio
from .emfit import EmConfig, InnerConfig, MixtureModel, fit, loglik
from .errors import ArgumentError, LmmixError
from .expfam import BinomialFamily, NormalFamily, binomial_remainder_envelope, q_values
from .gridsel import GridSpec, build_grid
from .lmm import Status, feasibility

logger = logging.getLogger("lmmix")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
EXIT_BOUNDARY, EXIT_INFEASIBLE = 3, 4

DEFAULTS = {
    "family": "normal",
    "sigma": "1.0",
    "gamma": "0.15",
    "tol": "1e-8",
    "max_iter": "500",
    "inner_tol": "1e-9",
    "inner_max_iter": "200",
    "points": "201",
    "size": "500",
    "seed": "0",
}


class Settings:
    """Command-line values layered over a config file and defaults."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        self._file = kvio.loads(Path(args.config).read_text()) if getattr(args, "config", None) else {}

    def get(self, key, default=None):
        value = self._args.get(key)
        if value is not None:
            return value
        return self._file.get(key, DEFAULTS.get(key, default))

    def require(self, key):
        value = self.get(key)
        if value is None:
            raise ArgumentError(f"missing required option --{key.replace('_', '-')}")
        return value


def _pair(text: str) -> tuple:
    vals = kvio.floats(text)
    if len(vals) != 2:
        raise ArgumentError(f"expected 'a,b', got {text!r}")
    return vals[0], vals[1]


def _family(s: Settings, count: int = 1) -> list:
    kind = s.get("family")
    if kind == "normal":
        sig = kvio.floats(str(s.get("sigma")))
        if len(sig) == 1:
            sig = sig * count
        if len(sig) != count:
            raise ArgumentError(f"got {len(sig)} sigma values for {count} grid points")
        return [NormalFamily(v) for v in sig]
    if kind == "binomial":
        return [BinomialFamily(int(s.require("n")))] * count
    raise ArgumentError(f"unknown family {kind!r}")


def _grid(s: Settings, data=None) -> tuple:
    """(points, families) from --grid or --range/--delta."""
    if s.get("grid"):
        pts = kvio.floats(str(s.get("grid")))
        return pts, _family(s, len(pts))
    delta = float(s.require("delta"))
    if s.get("range"):
        lo, hi = _pair(str(s.get("range")))
    elif data is not None:
        lo, hi = float(np.min(data)), float(np.max(data))
    else:
        raise ArgumentError("give --grid or --range with --delta")
    spec = build_grid(_family(s)[0], (lo, hi), delta)
    return spec.points, _family(s, len(spec.points))


def _em_config(s: Settings) -> EmConfig:
    return EmConfig(
        gamma=float(s.get("gamma")),
        tol=float(s.get("tol")),
        max_iter=int(s.get("max_iter")),
        inner=InnerConfig(float(s.get("inner_tol")), int(s.get("inner_max_iter"))),
    )


def format_report(report) -> str:
    m = report.model
    lines = [
        f"order: {report.order}",
        f"converged: {'yes' if report.converged else 'no'} after {report.iterations} iterations",
        f"loglik: {report.loglik:.10g}",
        "components:",
    ]
    for c in m.components:
        lam = ", ".join(f"{v:.6g}" for v in c.lam)
        lines.append(f"  mu={c.mu:g}  rho={c.rho:.3f}  lambda=({lam})")
    lines.append("loglik trace: " + " ".join(f"{v:.8g}" for v in report.loglik_trace))
    lines.append("pruning history:")
    if not report.pruning_history:
        lines.append("  none")
    for e in report.pruning_history:
        lines.append(f"  iteration {e.iteration}: removed grid points {list(e.indices)} ({e.reason})")
    return "\n".join(lines) + "\n"


def _emit(text: str, path) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_fit(args) -> int:
    s = Settings(args)
    data = kvio.read_observations(s.require("input"))
    points, fams = _grid(s, data)
    report = fit(data, points, _em_config(s), family=fams)
    _emit(format_report(report), s.get("report"))
    if s.get("model"):
        Path(s.get("model")).write_text(kvio.dumps(kvio.report_items(report)))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def density_table(model: MixtureModel, xs) -> np.ndarray:
    """Rows (x, h(x), g_1(x), ..., g_L(x))."""
    xs = np.asarray(xs, dtype=float)
    g = np.exp(model.component_log_densities(xs))
    h = g @ model.rho
    return np.column_stack([xs, h, g])


def cmd_density(args) -> int:
    s = Settings(args)
    model = kvio.read_model(s.require("model"))
    fam = model.components[0].family
    if isinstance(fam, BinomialFamily):
        lo = int(float(s.get("xmin", 0)))
        hi = int(float(s.get("xmax", fam.n)))
        if lo < 0 or hi > fam.n or lo > hi:
            raise ArgumentError(f"x range [{lo}, {hi}] is outside the support 0..{fam.n}")
        xs = np.arange(lo, hi + 1)
    else:
        xs = np.linspace(float(s.require("xmin")), float(s.require("xmax")), int(s.get("points")))
    table = density_table(model, xs)
    header = ["x", "h"] + [f"g{i}" for i in range(1, len(model) + 1)]
    out = []
    if s.get("data"):
        out.append(f"# loglik\t{kvio.fmt(loglik(model, kvio.read_observations(s.get('data'))))}\n")
    out.append("\t".join(header) + "\n")
    out += ["\t".join(kvio.fmt(v) for v in row) + "\n" for row in table]
    _emit("".join(out), s.get("output"))
    return EXIT_OK


def _envelope_check(n: int, lo: float, hi: float, samples: int = 16) -> bool:
    fam = BinomialFamily(n)
    for m in np.linspace(lo, hi, samples):
        env = binomial_remainder_envelope(n, m)
        q5 = q_values(fam, m, fam.support, 5)[:, 4]
        if not (np.all(env.lower < q5) and np.all(q5 < env.upper)):
            return False
    return True


def grid_items(spec: GridSpec) -> list:
    fam = spec.family
    items = [("family", fam.kind)]
    items.append(("sigma", fam.sigma) if isinstance(fam, NormalFamily) else ("n", fam.n))
    items += [
        ("delta", spec.budget.delta),
        ("epsilon", spec.budget.epsilon),
        ("count", len(spec)),
        ("points", spec.points),
        ("interval_lo", [a for a, _ in spec.intervals]),
        ("interval_hi", [b for _, b in spec.intervals]),
        ("eps1", [e for e, _ in spec.epsilons]),
        ("eps2", [e for _, e in spec.epsilons]),
        ("M", spec.bounds),
    ]
    if isinstance(fam, BinomialFamily):
        checks = [_envelope_check(fam.n, max(a, 1e-9), min(b, fam.n - 1e-9)) for a, b in spec.intervals]
        items.append(("envelope_check", "pass" if all(checks) else "fail"))
    return items


def cmd_grid(args) -> int:
    s = Settings(args)
    spec = build_grid(_family(s)[0], _pair(str(s.require("range"))), float(s.require("delta")))
    _emit(kvio.dumps(grid_items(spec)), s.get("output"))
    return EXIT_OK


def parse_simspec(text: str) -> list:
    """'w:mean:sd,w:mean:sd,...' -> list of (w, mean, sd); weights must sum to 1."""
    triples = []
    for part in text.split(","):
        fields = part.strip().split(":")
        if len(fields) != 3:
            raise ArgumentError(f"bad component {part!r}; expected weight:mean:sd")
        w, m, sd = (float(v) for v in fields)
        if w < 0 or sd <= 0:
            raise ArgumentError(f"bad component {part!r}; need weight >= 0 and sd > 0")
        triples.append((w, m, sd))
    if abs(sum(t[0] for t in triples) - 1.0) > 1e-9:
        raise ArgumentError("simulation weights must sum to 1")
    return triples


def mixture_quantile(spec: list, u) -> np.ndarray:
    """Inverse CDF of a normal mixture, by vectorized bisection."""
    w = np.array([t[0] for t in spec])
    means = np.array([t[1] for t in spec])
    sds = np.array([t[2] for t in spec])
    u = np.asarray(u, dtype=float)
    lo = np.full(u.shape, np.min(means - 40 * sds))
    hi = np.full(u.shape, np.max(means + 40 * sds))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        cdf = ndtr((mid[:, None] - means) / sds) @ w
        below = cdf < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def simulate_sample(spec: list, size: int, seed: int) -> np.ndarray:
    """Inverse-CDF draw; equal seeds give quantile-coupled samples across specs."""
    rng = np.random.default_rng(seed)
    return mixture_quantile(spec, rng.uniform(size=size))


def run_simulation(specs: list, size: int, seed: int, fit_for) -> dict:
    """Draw one sample per spec, each from a generator seeded with ``seed``, and fit each.

    ``fit_for(sample)`` returns a FitReport.
    """
    samples = [simulate_sample(spec, size, seed) for spec in specs]
    reports = [fit_for(x) for x in samples]
    out = {"samples": samples, "reports": reports}
    if len(samples) == 2:
        lo = min(x.min() for x in samples)
        hi = max(x.max() for x in samples)
        xs = np.linspace(lo, hi, 2001)
        out["sup_diff"] = float(np.max(np.abs(reports[0].model.density(xs) - reports[1].model.density(xs))))
    return out


def cmd_simulate(args) -> int:
    s = Settings(args)
    spec_texts = args.spec or ([s.get("spec")] if s.get("spec") else [])
    if not spec_texts:
        raise ArgumentError("give at least one --spec")
    specs = [parse_simspec(t) for t in spec_texts]
    size = int(s.get("size"))
    if size < 1:
        raise ArgumentError("--size must be positive")
    config = _em_config(s)
    fixed = s.get("grid") or s.get("range")
    grid = _grid(s) if fixed else None

    def fit_for(x):
        points, fams = grid if grid is not None else _grid(s, x)
        return fit(x, points, config, family=fams)

    result = run_simulation(specs, size, int(s.get("seed")), fit_for)
    items = [("seed", int(s.get("seed"))), ("size", size)]
    for i, rep in enumerate(result["reports"], 1):
        items += [
            (f"order.{i}", rep.order),
            (f"mu.{i}", rep.model.mu),
            (f"rho.{i}", rep.model.rho),
            (f"converged.{i}", rep.converged),
        ]
    if "sup_diff" in result:
        items.append(("sup_diff", result["sup_diff"]))
        items.append(("same_order", result["reports"][0].order == result["reports"][1].order))
    _emit(kvio.dumps(items), s.get("output"))
    if s.get("qq"):
        sorted_cols = np.column_stack([np.sort(x) for x in result["samples"]])
        Path(s.get("qq")).write_text(
            "".join("\t".join(kvio.fmt(v) for v in row) + "\n" for row in sorted_cols))
    return EXIT_OK if all(r.converged for r in result["reports"]) else EXIT_NOT_CONVERGED


def cmd_check(args) -> int:
    s = Settings(args)
    lam = kvio.floats(str(s.require("lambda")))
    if len(lam) != 4:
        raise ArgumentError("--lambda needs four comma-separated values")
    report = feasibility(_family(s)[0], float(s.require("mu0")), lam)
    items = [
        ("status", report.status.value),
        ("min_value", report.min_value),
        ("argmin", "unbounded-direction" if report.argmin is None else report.argmin),
        ("margin", report.margin),
    ]
    _emit(kvio.dumps(items), s.get("output"))
    return {Status.INTERIOR: EXIT_OK, Status.BOUNDARY: EXIT_BOUNDARY,
            Status.INFEASIBLE: EXIT_INFEASIBLE}[report.status]


def _family_options(p):
    p.add_argument("--family", choices=["normal", "binomial"])
    p.add_argument("--sigma", help="standard deviation, or one per grid point (comma-separated)")
    p.add_argument("--n", type=int, help="binomial number of trials")


def _fit_options(p):
    p.add_argument("--grid", help="comma-separated grid means; write --grid=-1,0,1 when the first is negative")
    p.add_argument("--range", help="mean range 'a,b' for an automatic grid")
    p.add_argument("--delta", type=float, help="density approximation tolerance for the grid")
    p.add_argument("--gamma", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--inner-tol", dest="inner_tol", type=float)
    p.add_argument("--inner-max-iter", dest="inner_max_iter", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmmix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a discrete mixture of local mixtures")
    p.add_argument("input", nargs="?")
    p.add_argument("--config")
    _family_options(p)
    _fit_options(p)
    p.add_argument("--report", help="human-readable report (default: stdout)")
    p.add_argument("--model", help="machine-readable key-value model file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("density", help="tabulate fitted densities")
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--xmin", type=float)
    p.add_argument("--xmax", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--data", help="observations; adds a '# loglik' line")
    p.add_argument("--output")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("grid", help="design a grid of anchor means")
    p.add_argument("--config")
    _family_options(p)
    p.add_argument("--range")
    p.add_argument("--delta", type=float)
    p.add_argument("--output")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("simulate", help="simulate normal mixtures and fit them")
    p.add_argument("--config")
    p.add_argument("--spec", action="append", help="weight:mean:sd,... (repeatable)")
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int)
    _family_options(p)
    _fit_options(p)
    p.add_argument("--qq", help="write sorted samples side by side")
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="classify a lambda vector")
    p.add_argument("--config")
    _family_options(p)
    p.add_argument("--mu0", type=float)
    p.add_argument("--lambda", dest="lambda")
    p.add_argument("--output")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LmmixError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
