"""Bearings, size ratios, conditional linear independence, eigenvalue checks, DOT export."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adjustment import PINV_RTOL, Collection, _as_collection, _unique_members, project, sym_pinv
from .belief import (
    BeliefStore,
    RandomMatrix,
    center,
    expectation_matrix,
    gram,
    inner_product,
    linear_coefficients,
    slots,
)
from .errors import ModelError, SpecificationError

TOL_IND = 1e-8
TOL_EIG = 1e-10
TOL_ASYM = 1e-12
LARGER = 2.5
SMALLER = 0.4


@dataclass(frozen=True)
class BearingReport:
    g_ref: np.ndarray
    coefficients: np.ndarray
    bearing: RandomMatrix
    realized_bearing: np.ndarray
    size: float
    expected_size: float

    @property
    def size_ratio(self) -> float:
        """``size / expected_size``; NaN when the expected size is zero."""
        if self.expected_size > 0.0:
            return self.size / self.expected_size
        return math.nan


def _reference_weights(g_ref: np.ndarray) -> dict:
    # slot (i, j) appears at both (i, j) and (j, i) in Tr(X G)
    return {(i, j): g_ref[i, j] + g_ref[j, i] if i != j else g_ref[i, i] for i, j in slots(g_ref.shape[0])}


def bearing(D: Collection, store: BeliefStore, g_ref=None, rtol: float = PINV_RTOL) -> BearingReport:
    """Bearing of the adjustment by an observed collection against reference matrix ``g_ref``.

    The bearing is the element ``sum_s b_s (D_s - E D_s)`` with
    ``(A - E A, bearing) = Tr((d_A - E A) g_ref)`` for every member A.
    ``expected_size = Tr(G^+ K)`` with ``K`` the prior covariance of the
    right-hand sides.
    """
    D = _as_collection(D)
    if D.observed is None:
        raise SpecificationError(f"collection {D.label} has no observations")
    r = D.dim
    g_ref = np.ones((r, r)) if g_ref is None else np.asarray(g_ref, dtype=float)
    if g_ref.shape != (r, r):
        raise ValueError(f"reference matrix has shape {g_ref.shape}, expected {(r, r)}")
    if not np.array_equal(g_ref, g_ref.T):
        raise ValueError("reference matrix must be symmetric")

    keep = _unique_members(D.members)
    uniq = [D.members[t] for t in keep]
    G = gram(uniq, store)
    Gp, _ = sym_pinv(G, rtol)
    rho = np.array(
        [np.sum((D.observed[t] - expectation_matrix(D.members[t], store)) * g_ref) for t in keep]
    )
    b = Gp @ rho
    coefficients = np.zeros(len(D.members))
    coefficients[keep] = b

    # rho_s as a linear form in the quantities: sum over slots of weight * coefficient
    A = linear_coefficients(uniq, store)
    w = _reference_weights(g_ref)
    forms = sum(w[s] * A[:, k, :] for k, s in enumerate(slots(r))) if uniq else np.zeros((0, len(store)))
    K = forms @ store.covariance @ forms.T
    expected = float(np.trace(Gp @ K)) if uniq else 0.0

    table = RandomMatrix.zeros(r)
    realized = np.zeros((r, r))
    for t in keep:
        if coefficients[t] != 0.0:
            table = table + center(D.members[t], store) * coefficients[t]
            realized = realized + coefficients[t] * (D.observed[t] - expectation_matrix(D.members[t], store))
    return BearingReport(
        g_ref=g_ref,
        coefficients=coefficients,
        bearing=table,
        realized_bearing=realized,
        size=float(b @ G @ b) if len(b) else 0.0,
        expected_size=max(expected, 0.0),
    )


def size_ratio(report: BearingReport, larger: float = LARGER, smaller: float = SMALLER) -> tuple[float, str]:
    """Ratio of realized to expected bearing size with an interpretation tag."""
    ratio = report.size_ratio
    if math.isnan(ratio):
        return ratio, "undefined"
    return ratio, classify_ratio(ratio, larger, smaller)


def classify_ratio(ratio: float, larger: float = LARGER, smaller: float = SMALLER) -> str:
    if ratio is None or math.isnan(ratio):
        return "undefined"
    if ratio > larger:
        return "larger-than-expected"
    if ratio < smaller:
        return "smaller-than-expected"
    return "consistent"


def cond_lin_indep(
    B: RandomMatrix, Cm: RandomMatrix, D, store: BeliefStore, tol: float = TOL_IND, rtol: float = PINV_RTOL
) -> tuple[float, bool]:
    """Inner product of the residuals of B and Cm after adjusting both by D.

    Zero means B and Cm are conditionally linearly independent given D.
    """
    D = _as_collection(D)
    res_b = B - project(B, D, store, rtol).adjusted
    res_c = Cm - project(Cm, D, store, rtol).adjusted
    value = inner_product(res_b, res_c, store)
    scale = max(1.0, math.sqrt(inner_product(res_b, res_b, store) * inner_product(res_c, res_c, store)))
    return value, abs(value) <= tol * scale


@dataclass(frozen=True)
class EigenReport:
    eigenvalues: np.ndarray
    negative: tuple[int, ...]
    condition_number: float

    @property
    def flagged(self) -> bool:
        return bool(self.negative)


def eigen_diagnostic(Mx, tol: float = TOL_EIG) -> EigenReport:
    """Eigenvalues (descending), negative-eigenvalue flags and condition number."""
    Mx = np.asarray(Mx, dtype=float)
    if Mx.ndim != 2 or Mx.shape[0] != Mx.shape[1]:
        raise ValueError(f"matrix must be square, got shape {Mx.shape}")
    scale = max(1.0, float(np.max(np.abs(Mx)))) if Mx.size else 1.0
    if np.max(np.abs(Mx - Mx.T), initial=0.0) > TOL_ASYM * scale:
        raise ValueError("matrix is not symmetric")
    lam = np.linalg.eigvalsh((Mx + Mx.T) / 2.0)[::-1]
    top = float(np.max(np.abs(lam))) if lam.size else 0.0
    floor = -tol * max(1.0, abs(float(lam[0])) if lam.size else 0.0)
    negative = tuple(int(k) for k in np.flatnonzero(lam < floor))
    low = float(np.min(np.abs(lam))) if lam.size else 0.0
    cond = top / low if low > 0.0 else math.inf
    return EigenReport(eigenvalues=lam, negative=negative, condition_number=cond)


@dataclass(frozen=True)
class DiagramNode:
    label: str
    segments: tuple[float, ...] = ()
    size_ratio: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(float(x) for x in self.segments))


@dataclass(frozen=True)
class DiagramArc:
    source: str
    target: str
    reversed: bool = False


@dataclass(frozen=True)
class DiagramModel:
    nodes: tuple[DiagramNode, ...] = ()
    arcs: tuple[DiagramArc, ...] = field(default_factory=tuple)
    tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "arcs", tuple(self.arcs))

    def check(self) -> None:
        names = [n.label for n in self.nodes]
        if len(set(names)) != len(names):
            raise ModelError("duplicate node labels")
        for node in self.nodes:
            for x in node.segments:
                if not (-self.tol <= x <= 1.0 + self.tol) or math.isnan(x):
                    raise ModelError(f"node {node.label}: segment {x!r} outside [0, 1]")
            if sum(node.segments) > 1.0 + self.tol:
                raise ModelError(f"node {node.label}: segments sum to {sum(node.segments):.6g} > 1")
        for arc in self.arcs:
            for end in (arc.source, arc.target):
                if end not in names:
                    raise ModelError(f"arc refers to unknown node {end!r}")


_FILL = {
    "larger-than-expected": ("gray25", "white"),
    "consistent": ("gray60", "black"),
    "smaller-than-expected": ("gray90", "black"),
    "undefined": ("white", "black"),
}


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _quote(text: str) -> str:
    return '"' + _escape(text) + '"'


def diagram_export(model: DiagramModel, name: str = "blin") -> str:
    """DOT text for a diagnostic influence diagram.

    Resolution segments become cumulative percentages in the node label and a
    ten-level outline shade; the size-ratio tag sets the fill.
    """
    model.check()
    lines = [f"digraph {_quote(name)} {{", '  node [shape=circle, style=filled, fontname="Helvetica"];']
    for node in model.nodes:
        parts = [node.label]
        if node.segments:
            cum, acc = [], 0.0
            for x in node.segments:
                acc += x
                cum.append(f"{100.0 * acc:.1f}%")
            parts.append("resolved " + " / ".join(cum))
        tag = classify_ratio(node.size_ratio) if node.size_ratio is not None else "undefined"
        if node.size_ratio is not None and not math.isnan(node.size_ratio):
            parts.append(f"size ratio {node.size_ratio:.3g} ({tag})")
        fill, font = _FILL[tag]
        total = min(sum(node.segments), 1.0)
        level = int(round(10 * total))
        attrs = [
            'label="' + "\\n".join(_escape(p) for p in parts) + '"',
            f"fillcolor={fill}",
            f"fontcolor={font}",
            f"color=gray{100 - 10 * level}",
            f"penwidth={1 + level / 2:g}",
        ]
        lines.append(f"  {_quote(node.label)} [{', '.join(attrs)}];")
    for arc in model.arcs:
        extra = " [dir=back]" if arc.reversed else ""
        lines.append(f"  {_quote(arc.source)} -> {_quote(arc.target)}{extra};")
    lines.append("}")
    return "\n".join(lines) + "\n"
