"""File formats: JSON specification files, CSV data, matrix files."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .belief import BeliefWarning, n_slots
from .errors import BlinError, DataError, SpecificationError
from .exchangeable import DataBatch, ExchangeableSpec, gaussian_residual_spec


class ParseError(BlinError):
    """A file could not be read or parsed."""


SPEC_FIELDS = {"r", "mu", "c", "c_prime", "v", "v_prime", "gaussian", "e_v_override", "n", "s", "diagram_arcs", "name"}


@dataclass
class SpecFile:
    """A parsed specification file: the spec plus optional run inputs."""

    spec: ExchangeableSpec
    n: int | None = None
    s: np.ndarray | None = None
    arcs: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)


def _read_json(path) -> object:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _matrix(doc: dict, key: str, shape: tuple, problems: list, required: bool = False):
    if key not in doc or doc[key] is None:
        if required:
            problems.append(f"missing field {key!r}")
        return None
    try:
        arr = np.array(doc[key], dtype=float)
    except (TypeError, ValueError):
        problems.append(f"field {key!r} is not a numeric array")
        return None
    if arr.shape != shape:
        problems.append(f"field {key!r} has shape {arr.shape}, expected {shape}")
        return None
    return arr


def parse_spec(doc: object) -> SpecFile:
    """Build a :class:`SpecFile` from a decoded JSON document, collecting every problem."""
    if not isinstance(doc, dict):
        raise SpecificationError("specification must be a JSON object")
    problems = [f"unknown field {k!r}" for k in sorted(set(doc) - SPEC_FIELDS)]
    r = doc.get("r")
    if not isinstance(r, int) or isinstance(r, bool) or r < 1:
        raise SpecificationError(f"field 'r' must be a positive integer, got {r!r}", problems + [f"bad r {r!r}"])
    m = n_slots(r)
    mu = _matrix(doc, "mu", (r,), problems)
    c = _matrix(doc, "c", (r, r), problems)
    c_prime = _matrix(doc, "c_prime", (r, r), problems)
    e_v = _matrix(doc, "e_v_override", (r, r), problems)
    s = _matrix(doc, "s", (r, r), problems)
    v = _matrix(doc, "v", (m, m), problems)
    v_prime = _matrix(doc, "v_prime", (m, m), problems)

    n = doc.get("n")
    if n is not None and (not isinstance(n, int) or isinstance(n, bool)):
        problems.append(f"field 'n' must be an integer, got {n!r}")
        n = None

    arcs = doc.get("diagram_arcs") or []
    if not isinstance(arcs, list) or not all(isinstance(a, list) and len(a) in (2, 3) for a in arcs):
        problems.append("field 'diagram_arcs' must be a list of [from, to] or [from, to, reversed]")
        arcs = []

    provenance = {}
    gauss = doc.get("gaussian")
    if gauss is not None:
        if v is not None:
            problems.append("give either 'v' or 'gaussian', not both")
        if not isinstance(gauss, dict):
            problems.append("field 'gaussian' must be an object")
            gauss = {}
        for k in sorted(set(gauss) - {"ev", "v_prime"}):
            problems.append(f"unknown field 'gaussian.{k}'")
        ev = _matrix(gauss, "ev", (r, r), problems)
        g_vp = _matrix(gauss, "v_prime", (m, m), problems)
        if g_vp is not None and v_prime is not None:
            problems.append("v_prime given both at top level and under 'gaussian'")
        v_prime = g_vp if g_vp is not None else v_prime
        if ev is None:
            if e_v is not None:
                ev = e_v
            elif c is not None and c_prime is not None:
                ev = c - c_prime
            else:
                problems.append("gaussian.ev missing and E(V) cannot be derived")
    elif v is None:
        problems.append("missing field 'v' (or a 'gaussian' section)")
    if e_v is None and (c is None or c_prime is None):
        problems.append("give 'e_v_override' or both 'c' and 'c_prime'")
    if problems:
        raise SpecificationError("; ".join(problems), problems)

    if v_prime is None:
        warnings.warn(
            "v_prime not given; defaulting to zero, so Var(V) = 0 and the data cannot revise V",
            BeliefWarning,
            stacklevel=2,
        )
        v_prime = np.zeros((m, m))
    if gauss is not None:
        frag = gaussian_residual_spec(ev, v_prime)
        v = frag.v
        provenance = dict(frag.metadata)
    spec = ExchangeableSpec(r=r, v=v, v_prime=v_prime, mu=mu, c=c, c_prime=c_prime, e_v=e_v)
    errors, _ = spec.violations()
    if errors:
        raise SpecificationError("; ".join(errors), errors)
    return SpecFile(spec=spec, n=n, s=s, arcs=arcs, provenance=provenance)


def load_spec(path) -> SpecFile:
    return parse_spec(_read_json(path))


def spec_to_dict(spec: ExchangeableSpec, n: int | None = None, s=None) -> dict:
    """Explicit form of a spec (``v`` always written out, never ``gaussian``)."""
    doc: dict = {"r": int(spec.r)}
    for key, val in (("mu", spec.mu), ("c", spec.c), ("c_prime", spec.c_prime)):
        if val is not None:
            doc[key] = val.tolist()
    doc["v"] = spec.v.tolist()
    doc["v_prime"] = spec.v_prime.tolist()
    if spec.e_v is not None:
        doc["e_v_override"] = spec.e_v.tolist()
    if n is not None:
        doc["n"] = int(n)
    if s is not None:
        doc["s"] = np.asarray(s, dtype=float).tolist()
    return doc


def dump_spec(spec: ExchangeableSpec, path, n: int | None = None, s=None) -> None:
    # json writes floats with repr, the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(spec_to_dict(spec, n, s), indent=2) + "\n")


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_data(path) -> DataBatch:
    """CSV data, one observation per row; a non-numeric first row is a header."""
    try:
        with open(path, newline="") as fh:
            rows = [(k + 1, row) for k, row in enumerate(csv.reader(fh)) if any(cell.strip() for cell in row)]
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    if rows and not all(_is_number(cell) for cell in rows[0][1]):
        rows = rows[1:]
    if not rows:
        return DataBatch(np.zeros((0, 0)))
    width = len(rows[0][1])
    values = []
    problems = []
    for line, row in rows:
        if len(row) != width:
            problems.append(f"{path}:{line}: expected {width} fields, got {len(row)}")
            continue
        try:
            values.append([float(cell) for cell in row])
        except ValueError:
            bad = next(cell for cell in row if not _is_number(cell))
            problems.append(f"{path}:{line}: non-numeric value {bad.strip()!r}")
    if problems:
        raise ParseError("\n".join(problems))
    try:
        return DataBatch(np.array(values))
    except DataError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def read_matrix(path) -> np.ndarray:
    """Square matrix from a JSON array or a header-less CSV file."""
    if str(path).endswith(".json"):
        doc = _read_json(path)
        try:
            arr = np.array(doc, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{path}: not a numeric matrix") from exc
    else:
        arr = read_data(path).values
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ParseError(f"{path}: expected a square matrix, got shape {arr.shape}")
    return arr


def read_report(path) -> dict:
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: report must be a JSON object")
    return doc
