"""Second-order exchangeable specifications and the beliefs they induce.

Fourth-order tensors (``v``, ``v_prime``, ``u``) are stored as symmetric
``m x m`` matrices over unordered slot pairs, ``m = r(r+1)/2``, with slots
in row-major upper-triangle order (1,1), (1,2), ..., (1,r), (2,2), ....
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .belief import TOL_PSD, BeliefStore, BeliefWarning, is_psd, min_eigen_ratio, n_slots, slots
from .errors import DataError, InsufficientDataError, SpecificationError

SYM_TOL = 1e-12


def quantity_label(prefix: str, i: int, j: int, r: int) -> str:
    """1-based label such as ``V_12``; a comma separates indices once r > 9."""
    sep = "," if r > 9 else ""
    return f"{prefix}_{i + 1}{sep}{j + 1}"


def slot_labels(prefix: str, r: int) -> list[str]:
    return [quantity_label(prefix, i, j, r) for i, j in slots(r)]


def pack_tensor(t4) -> np.ndarray:
    """Pack a full ``r x r x r x r`` tensor into slot-pair storage.

    Raises :class:`SpecificationError` naming the first index quadruples that
    break the i<->j, p<->q or (ij)<->(pq) symmetries.
    """
    t = np.asarray(t4, dtype=float)
    r = t.shape[0]
    if t.shape != (r, r, r, r):
        raise SpecificationError(f"tensor must have shape (r, r, r, r), got {t.shape}")
    scale = max(1.0, float(np.max(np.abs(t)))) if t.size else 1.0
    problems = []
    for name, other in (
        ("i<->j", t.transpose(1, 0, 2, 3)),
        ("p<->q", t.transpose(0, 1, 3, 2)),
        ("(ij)<->(pq)", t.transpose(2, 3, 0, 1)),
    ):
        for idx in np.argwhere(np.abs(t - other) > SYM_TOL * scale)[:5]:
            i, j, p, q = (int(x) + 1 for x in idx)
            problems.append(f"{name} symmetry fails at ({i},{j},{p},{q})")
    if problems:
        raise SpecificationError("; ".join(problems), problems)
    sl = slots(r)
    return np.array([[t[i, j, p, q] for p, q in sl] for i, j in sl])


def unpack_tensor(packed: np.ndarray, r: int) -> np.ndarray:
    """Inverse of :func:`pack_tensor`."""
    sl = slots(r)
    index = {s: k for k, s in enumerate(sl)}
    out = np.empty((r, r, r, r))
    for i in range(r):
        for j in range(r):
            a = index[(min(i, j), max(i, j))]
            for p in range(r):
                for q in range(r):
                    out[i, j, p, q] = packed[a, index[(min(p, q), max(p, q))]]
    return out


def _asymmetric_pairs(mat: np.ndarray, names: Sequence[str]) -> list[str]:
    scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
    out = []
    for a, b in np.argwhere(np.abs(mat - mat.T) > SYM_TOL * scale):
        if a < b:
            out.append(f"({names[a]}, {names[b]})")
    return out


@dataclass(frozen=True)
class ExchangeableSpec:
    """Raw second-order exchangeable specification.

    ``mu``, ``c`` and ``c_prime`` may be omitted when ``e_v`` supplies the
    expected population covariance directly; ``e_v`` overrides
    ``c - c_prime`` whenever both are present.
    """

    r: int
    v: np.ndarray
    v_prime: np.ndarray
    mu: np.ndarray | None = None
    c: np.ndarray | None = None
    c_prime: np.ndarray | None = None
    e_v: np.ndarray | None = None

    def __post_init__(self):
        for name in ("v", "v_prime", "mu", "c", "c_prime", "e_v"):
            val = getattr(self, name)
            if val is not None:
                arr = np.array(val, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return n_slots(self.r)

    @property
    def u(self) -> np.ndarray:
        """Residual fourth-moment tensor ``u = v - v'`` (slot-pair storage)."""
        return self.v - self.v_prime

    def expected_v(self) -> np.ndarray:
        if self.e_v is not None:
            return np.array(self.e_v)
        return np.array(self.c - self.c_prime)

    def violations(self, tol_psd: float = TOL_PSD) -> tuple[list[str], list[str]]:
        """Return ``(errors, advisories)``.

        Errors are shape, finiteness and symmetry failures. Advisories are PSD
        failures, which only become errors in strict mode.
        """
        errors: list[str] = []
        advisories: list[str] = []
        r = self.r
        if not isinstance(r, (int, np.integer)) or r < 1:
            return [f"r must be a positive integer, got {r!r}"], []
        m = n_slots(r)
        shapes = {"v": (m, m), "v_prime": (m, m), "mu": (r,), "c": (r, r), "c_prime": (r, r), "e_v": (r, r)}
        for name, shape in shapes.items():
            val = getattr(self, name)
            if val is None:
                continue
            if val.shape != shape:
                errors.append(f"{name} has shape {val.shape}, expected {shape}")
            elif not np.all(np.isfinite(val)):
                errors.append(f"{name} contains non-finite values")
        if self.e_v is None and (self.c is None or self.c_prime is None):
            errors.append("either e_v or both c and c_prime must be given")
        if errors:
            return errors, advisories

        idx = [str(k + 1) for k in range(r)]
        pairs = [f"{i + 1}{j + 1}" for i, j in slots(r)]
        for name in ("c", "c_prime", "e_v"):
            val = getattr(self, name)
            if val is not None:
                for pq in _asymmetric_pairs(val, idx):
                    errors.append(f"{name} is not symmetric at {pq}")
        for name in ("v", "v_prime"):
            for pq in _asymmetric_pairs(getattr(self, name), pairs):
                errors.append(f"{name} breaks (ij)<->(pq) symmetry at {pq}")
        if errors:
            return errors, advisories

        checks = [
            ("E(V)", self.expected_v()),
            ("v_prime = Cov(V, V)", self.v_prime),
            ("u = v - v_prime = Cov(U, U)", self.u),
        ]
        for name, mat in checks:
            if not is_psd(mat, tol_psd):
                lo, _ = min_eigen_ratio(mat)
                advisories.append(f"{name} is not positive semi-definite (smallest eigenvalue {lo:.6g})")
        return errors, advisories

    def validate(self, strict: bool = False, tol_psd: float = TOL_PSD) -> None:
        errors, advisories = self.violations(tol_psd)
        if strict:
            errors = errors + advisories
        if errors:
            raise SpecificationError("; ".join(errors), errors)
        for msg in advisories:
            warnings.warn(msg, BeliefWarning, stacklevel=2)


def population_beliefs(spec: ExchangeableSpec, strict: bool = False) -> BeliefStore:
    """Belief store over ``V_ij`` (i <= j): ``E(V) = c - c'`` and ``Cov(V, V) = v'``."""
    spec.validate(strict)
    ev = spec.expected_v()
    mean = [ev[s] for s in slots(spec.r)]
    return BeliefStore(slot_labels("V", spec.r), mean, spec.v_prime, strict=strict)


def sample_beliefs(spec: ExchangeableSpec, n: int, strict: bool = False) -> BeliefStore:
    """Belief store over ``V_ij`` then ``S_ij`` for a sample of size ``n``.

    ``S = V + T`` with ``E(T) = 0``, ``Cov(V, T) = 0`` and
    ``Cov(T_ij, T_pq) = u_ijpq / n``.
    """
    if int(n) != n or n < 2:
        raise InsufficientDataError(f"sample size must be an integer >= 2, got {n!r}")
    spec.validate(strict)
    n = int(n)
    ev = spec.expected_v()
    mean = [ev[s] for s in slots(spec.r)]
    vp = np.asarray(spec.v_prime)
    var_s = vp + spec.u / n
    cov = np.block([[vp, vp], [vp, var_s]])
    labels = slot_labels("V", spec.r) + slot_labels("S", spec.r)
    return BeliefStore(labels, mean + mean, cov, strict=strict)


@dataclass(frozen=True)
class DataBatch:
    """``n x r`` observations, one row per individual."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 2:
            raise DataError(f"data must be two-dimensional, got shape {arr.shape}")
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            row, col = (int(x) for x in bad[0])
            raise DataError(f"non-finite value in row {row + 1}, column {col + 1}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def r(self) -> int:
        return self.values.shape[1]


def sample_covariance(data: DataBatch) -> np.ndarray:
    """Sample covariance with divisor ``n - 1``.

    Sums are correctly rounded (``math.fsum``), so the result does not depend
    on row order.
    """
    n, r = data.n, data.r
    if n < 2:
        raise InsufficientDataError(f"sample covariance needs n >= 2 observations, got {n}")
    cols = [data.values[:, i].tolist() for i in range(r)]
    dev = []
    for col in cols:
        mean = math.fsum(col) / n
        dev.append([x - mean for x in col])
    out = np.zeros((r, r))
    for i in range(r):
        for j in range(i, r):
            out[i, j] = out[j, i] = math.fsum(a * b for a, b in zip(dev[i], dev[j])) / (n - 1)
    return out


def gaussian_fourth_moments(ev) -> np.ndarray:
    """``Cov(R_i R_j, R_p R_q) = ev_ip ev_jq + ev_iq ev_jp`` for zero-mean normal R."""
    ev = np.asarray(ev, dtype=float)
    sl = slots(ev.shape[0])
    return np.array([[ev[i, p] * ev[j, q] + ev[i, q] * ev[j, p] for p, q in sl] for i, j in sl])


@dataclass(frozen=True)
class ResidualFragment:
    """The ``v`` tensor implied by a Gaussian residual specification."""

    v: np.ndarray
    u: np.ndarray
    v_prime: np.ndarray
    metadata: dict = field(default_factory=dict)


def gaussian_residual_spec(ev, v_prime=None, strict: bool = False, tol_psd: float = TOL_PSD) -> ResidualFragment:
    """Residual fourth moments consistent with normal residuals of covariance ``ev``.

    The fourth-moment identity is evaluated at the plug-in value ``ev``
    (normally ``E(V)``); uncertainty about V is not integrated over.
    """
    ev = np.asarray(ev, dtype=float)
    if ev.ndim != 2 or ev.shape[0] != ev.shape[1]:
        raise SpecificationError(f"ev must be a square matrix, got shape {ev.shape}")
    r = ev.shape[0]
    m = n_slots(r)
    problems = [f"ev is not symmetric at {pq}" for pq in _asymmetric_pairs(ev, [str(k + 1) for k in range(r)])]
    if problems:
        raise SpecificationError("; ".join(problems), problems)
    ev = (ev + ev.T) / 2.0
    if not is_psd(ev, tol_psd):
        lo, _ = min_eigen_ratio(ev)
        msg = f"ev is not positive semi-definite (smallest eigenvalue {lo:.6g})"
        if strict:
            raise SpecificationError(msg)
        warnings.warn(msg, BeliefWarning, stacklevel=2)
    vp = np.zeros((m, m)) if v_prime is None else np.asarray(v_prime, dtype=float)
    if vp.shape != (m, m):
        raise SpecificationError(f"v_prime has shape {vp.shape}, expected {(m, m)}")
    u = gaussian_fourth_moments(ev)
    metadata = {
        "method": "gaussian-plug-in",
        "identity": "u_ijpq = ev_ip*ev_jq + ev_iq*ev_jp",
        "evaluated_at": "supplied ev (plug-in, no integration over V)",
        "v_prime_supplied": v_prime is not None,
    }
    return ResidualFragment(v=vp + u, u=u, v_prime=vp, metadata=metadata)


def monte_carlo_fourth_moments(ev, draws: int = 100_000, seed: int | None = 0) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ``Cov(R_i R_j, R_p R_q)`` from seeded normal draws.

    Returns ``(estimate, standard_error)`` in slot-pair storage. Intended as
    an independent check of :func:`gaussian_fourth_moments`.
    """
    ev = np.asarray(ev, dtype=float)
    r = ev.shape[0]
    rng = np.random.default_rng(seed)
    R = rng.multivariate_normal(np.zeros(r), ev, size=draws, method="eigh")
    Y = np.stack([R[:, i] * R[:, j] for i, j in slots(r)], axis=1)
    Yc = Y - Y.mean(axis=0)
    prod = Yc[:, :, None] * Yc[:, None, :]
    est = prod.sum(axis=0) / (draws - 1)
    se = prod.std(axis=0, ddof=1) / math.sqrt(draws)
    return est, se
