"""Flat ``key<TAB>value`` text files and observation input.

Arrays are written comma-joined with 17 significant digits so that floats
survive a round trip bit for bit.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ArgumentError
from .expfam import BinomialFamily, NormalFamily
from .emfit import Component, FitReport, MixtureModel


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, str):
        return value
    return ",".join(fmt(v) for v in value)


def dumps(items: Iterable) -> str:
    return "".join(f"{k}\t{fmt(v)}\n" for k, v in items)


def loads(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" in line:
            key, value = line.split("\t", 1)
        elif "=" in line:
            key, value = line.split("=", 1)
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ArgumentError(f"line {lineno}: expected 'key<TAB>value', got {line!r}")
            key, value = parts
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def floats(value: str) -> list:
    return [float(v) for v in value.split(",") if v.strip()]


def read_observations(path) -> np.ndarray:
    """One number per line; blank lines and ``#`` comments are skipped."""
    values = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ArgumentError(f"{path}: line {lineno}: not a number: {line!r}") from None
    if not values:
        raise ArgumentError(f"{path}: no observations")
    return np.array(values)


def model_items(model: MixtureModel) -> list:
    fam = model.components[0].family
    items = [("family", fam.kind), ("order", len(model)), ("mu", model.mu), ("rho", model.rho)]
    if isinstance(fam, NormalFamily):
        items.append(("sigma", [c.family.sigma for c in model.components]))
    else:
        items.append(("n", fam.n))
    items.append(("label", model.labels))
    for i, c in enumerate(model.components, 1):
        items.append((f"lambda.{i}", c.lam))
    return items


def report_items(report: FitReport) -> list:
    items = model_items(report.model)
    items += [
        ("loglik", report.loglik),
        ("converged", report.converged),
        ("iterations", report.iterations),
        ("loglik_trace", report.loglik_trace),
        ("pruned", ";".join(f"{e.iteration}:{'/'.join(str(i) for i in e.indices)}:{e.reason}"
                            for e in report.pruning_history) or "none"),
    ]
    return items


def model_from_kv(d: dict) -> MixtureModel:
    try:
        kind = d["family"]
        mus = floats(d["mu"])
        rho = floats(d["rho"])
        labels = [int(v) for v in d.get("label", ",".join(str(i) for i in range(len(mus)))).split(",")]
        if kind == "normal":
            sig = floats(d["sigma"])
            fams = [NormalFamily(s) for s in (sig if len(sig) == len(mus) else sig * len(mus))]
        elif kind == "binomial":
            fams = [BinomialFamily(int(d["n"]))] * len(mus)
        else:
            raise ArgumentError(f"unknown family {kind!r}")
        comps = tuple(
            Component(r, m, f, tuple(floats(d[f"lambda.{i}"])), lab)
            for i, (r, m, f, lab) in enumerate(zip(rho, mus, fams, labels), 1)
        )
    except KeyError as exc:
        raise ArgumentError(f"model file is missing key {exc.args[0]!r}") from None
    return MixtureModel(comps)


def read_model(path) -> MixtureModel:
    return model_from_kv(loads(Path(path).read_text()))
