"""End-to-end analysis: beliefs -> adjustments -> diagnostics -> diagram model.

Reports are plain dicts of floats, lists and strings so they serialize to
JSON deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import diagnostics as dg
from .adjustment import (
    PINV_RTOL,
    adjust,
    build_collections,
    build_individual_population,
    collection_resolution,
    population_matrix,
    union,
)
from .belief import TOL_PSD, BeliefStore, RandomMatrix, expectation_matrix
from .errors import DiagnosticError, SpecificationError
from .exchangeable import ExchangeableSpec, sample_beliefs, slot_labels

CHOICES = {"s": "D_S", "i": "D_I", "c": "D_C"}


@dataclass(frozen=True)
class Tolerances:
    psd: float = TOL_PSD
    pinv: float = PINV_RTOL
    ind: float = dg.TOL_IND
    eig: float = dg.TOL_EIG
    larger: float = dg.LARGER
    smaller: float = dg.SMALLER


@dataclass
class Problem:
    spec: ExchangeableSpec
    n: int
    s_obs: np.ndarray
    store: BeliefStore
    v_ids: list[int]
    s_ids: list[int]
    collections: dict
    target: RandomMatrix
    v_individual: object
    arcs: list = field(default_factory=list)


def parse_choices(text: str | Sequence[str]) -> list[str]:
    items = [c.strip().lower() for c in (text.split(",") if isinstance(text, str) else text)]
    items = [c for c in items if c]
    if not items:
        raise SpecificationError("no collections chosen; use a subset of s,i,c")
    bad = [c for c in items if c not in CHOICES]
    if bad:
        raise SpecificationError(f"unknown collection choice(s) {bad}; use a subset of s,i,c")
    # nested order s < i < c, duplicates dropped
    return [c for c in CHOICES if c in items]


def build_problem(
    spec: ExchangeableSpec,
    s_obs,
    n: int,
    strict: bool = False,
    tol: Tolerances = Tolerances(),
    arcs=None,
) -> Problem:
    s_obs = np.asarray(s_obs, dtype=float)
    r = spec.r
    if s_obs.shape != (r, r):
        raise SpecificationError(f"sample covariance has shape {s_obs.shape}, expected {(r, r)}")
    if not np.array_equal(s_obs, s_obs.T):
        raise SpecificationError("sample covariance matrix is not symmetric")
    spec.validate(strict, tol.psd)
    store = sample_beliefs(spec, n, strict=strict)
    v_ids = store.ids(slot_labels("V", r))
    s_ids = store.ids(slot_labels("S", r))
    return Problem(
        spec=spec,
        n=n,
        s_obs=s_obs,
        store=store,
        v_ids=v_ids,
        s_ids=s_ids,
        collections=build_collections(s_ids, r, s_obs),
        target=population_matrix(v_ids, r),
        v_individual=build_individual_population(v_ids, r),
        arcs=list(arcs) if arcs else [],
    )


def _mat(x) -> list:
    return np.asarray(x, dtype=float).tolist()


def _num(x: float):
    x = float(x)
    return None if math.isnan(x) or math.isinf(x) else x


def eigen_summary(mat, tol: Tolerances) -> dict:
    rep = dg.eigen_diagnostic(mat, tol.eig)
    return {
        "eigenvalues": _mat(rep.eigenvalues),
        "negative": list(rep.negative),
        "condition_number": _num(rep.condition_number),
        "flagged": rep.flagged,
    }


def run_adjust(problem: Problem, choices: Sequence[str], tol: Tolerances = Tolerances()) -> dict:
    """Adjust V separately by each chosen collection."""
    out = []
    for c in parse_choices(choices):
        label = CHOICES[c]
        res = adjust(problem.target, problem.collections[label], problem.store, tol.pinv)
        out.append(
            {
                "collection": label,
                "matrix": _mat(res.realized),
                "resolution": res.resolution,
                "coefficients": _mat(res.coefficients),
                "prior_norm_sq": res.prior_norm_sq,
                "resolved_norm_sq": res.resolved_norm_sq,
                "residual_norm_sq": res.residual_norm_sq,
                "eigen": eigen_summary(res.realized, tol),
            }
        )
    return {
        "r": problem.spec.r,
        "n": problem.n,
        "prior_expectation": _mat(expectation_matrix(problem.target, problem.store)),
        "sample_covariance": _mat(problem.s_obs),
        "adjustments": out,
    }


def run_resolve(problem: Problem, choices: Sequence[str], tol: Tolerances = Tolerances()) -> dict:
    """Cumulative resolutions of V and of the collection V_I."""
    labels = [CHOICES[c] for c in parse_choices(choices)]
    steps = []
    prev_v = prev_vi = 0.0
    for k in range(len(labels)):
        D = union([problem.collections[lab] for lab in labels[: k + 1]])
        res = adjust(problem.target, D, problem.store, tol.pinv)
        vi = collection_resolution(problem.v_individual, D, problem.store, tol.pinv)
        steps.append(
            {
                "collections": labels[: k + 1],
                "resolution_V": res.resolution,
                "increment_V": res.resolution - prev_v,
                "resolution_V_I": vi,
                "increment_V_I": vi - prev_vi,
            }
        )
        prev_v, prev_vi = res.resolution, vi
    return {"r": problem.spec.r, "n": problem.n, "steps": steps}


def _bearing_summary(report: dg.BearingReport, tol: Tolerances) -> dict:
    ratio, tag = dg.size_ratio(report, tol.larger, tol.smaller)
    return {
        "size": report.size,
        "expected_size": report.expected_size,
        "size_ratio": _num(ratio),
        "interpretation": tag,
        "coefficients": _mat(report.coefficients),
        "realized_bearing": _mat(report.realized_bearing),
    }


def run_diagnose(
    problem: Problem,
    choices: Sequence[str],
    g_ref=None,
    strict: bool = False,
    tol: Tolerances = Tolerances(),
) -> dict:
    """Adjustments plus stepwise resolutions, bearings, size ratios and independence checks.

    In strict mode a negative-eigenvalue flag on any adjusted matrix raises
    :class:`DiagnosticError` after the report is complete (attached as
    ``err.report``).
    """
    report = run_adjust(problem, choices, tol)
    report["stepwise"] = run_resolve(problem, choices, tol)["steps"]
    labels = [CHOICES[c] for c in parse_choices(choices)]
    r = problem.spec.r
    g = np.ones((r, r)) if g_ref is None else np.asarray(g_ref, dtype=float)
    whole_s = problem.collections["D_S"].members[0]
    for k, step in enumerate(report["stepwise"]):
        D = union([problem.collections[lab] for lab in labels[: k + 1]])
        step["bearing"] = _bearing_summary(dg.bearing(D, problem.store, g, tol.pinv), tol)
        value, indep = dg.cond_lin_indep(problem.target, whole_s, D, problem.store, tol.ind, tol.pinv)
        step["independence_V_S"] = {"inner_product": value, "independent": indep}
    report["collection_bearings"] = {
        lab: _bearing_summary(dg.bearing(problem.collections[lab], problem.store, g, tol.pinv), tol)
        for lab in labels
    }
    report["g_ref"] = _mat(g)
    flagged = [a["collection"] for a in report["adjustments"] if a["eigen"]["flagged"]]
    report["warnings"] = [f"adjusted matrix for {lab} has negative eigenvalues" for lab in flagged]
    if strict and flagged:
        err = DiagnosticError("; ".join(report["warnings"]))
        err.report = report
        raise err
    return report


def diagram_model(report: dict, arcs=None) -> dg.DiagramModel:
    """Diagram model from a diagnose report.

    V and V_I carry the stepwise resolution increments; the centre of V shows
    the size ratio of the final cumulative bearing, each D node its own.
    """
    steps = report.get("stepwise")
    if not steps:
        raise SpecificationError("report has no stepwise results; run diagnose first")
    final = steps[-1]["bearing"]["size_ratio"]
    nodes = [
        dg.DiagramNode("V", tuple(max(s["increment_V"], 0.0) for s in steps), final),
        dg.DiagramNode("V_I", tuple(max(s["increment_V_I"], 0.0) for s in steps)),
    ]
    labels = steps[-1]["collections"]
    for lab in labels:
        nodes.append(dg.DiagramNode(lab, (), report["collection_bearings"][lab]["size_ratio"]))
    if arcs:
        arc_objs = [dg.DiagramArc(a[0], a[1], bool(a[2]) if len(a) > 2 else False) for a in arcs]
    else:
        arc_objs = [dg.DiagramArc(lab, "V") for lab in labels] + [dg.DiagramArc("V", "V_I")]
    return dg.DiagramModel(tuple(nodes), tuple(arc_objs))
