"""Belief store and the inner-product space of symmetric random matrices.

A random matrix is an ``r x r`` symmetric matrix whose upper-triangle slots
hold affine forms over scalar quantities registered in a :class:`BeliefStore`.
The geometry of the space is ``(P, Q) = E(Tr(PQ))``; for symmetric matrices
this is the entrywise sum ``sum_ij E(P_ij Q_ij)``, so every off-diagonal slot
is counted twice.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import SpecificationError

TOL_PSD = 1e-8
TOL_NUM = 1e-12
TOL_EQ = 1e-10

Slot = tuple[int, int]
Terms = tuple[tuple[int, float], ...]


class BeliefWarning(UserWarning):
    """Advisory problem with a belief specification (non-strict mode)."""


def slots(r: int) -> list[Slot]:
    """Upper-triangle slots in row-major order (0,0), (0,1), ..., (r-1,r-1)."""
    return [(i, j) for i in range(r) for j in range(i, r)]


def n_slots(r: int) -> int:
    return r * (r + 1) // 2


def canonical_slot(i: int, j: int) -> Slot:
    return (i, j) if i <= j else (j, i)


def slot_weight(slot: Slot) -> float:
    """Number of positions a slot occupies in the full matrix."""
    return 1.0 if slot[0] == slot[1] else 2.0


def min_eigen_ratio(mat: np.ndarray) -> tuple[float, float]:
    """Return (smallest, largest) eigenvalue of a symmetric matrix."""
    if mat.size == 0:
        return 0.0, 0.0
    lam = np.linalg.eigvalsh(mat)
    return float(lam[0]), float(lam[-1])


def is_psd(mat: np.ndarray, tol: float = TOL_PSD) -> bool:
    lo, hi = min_eigen_ratio(mat)
    return lo >= -tol * max(hi, 0.0)


@dataclass(frozen=True)
class QuantityId:
    id: int
    label: str


class BeliefStore:
    """Expectations and covariances over an ordered registry of scalar quantities.

    The store is immutable. Covariance must be exactly symmetric; positive
    semi-definiteness is checked with relative tolerance ``tol_psd`` and
    reported as a :class:`BeliefWarning` unless ``strict`` is set, in which
    case a :class:`SpecificationError` is raised.
    """

    def __init__(
        self,
        labels: Sequence[str],
        expectation: Sequence[float] | np.ndarray,
        covariance: Sequence[Sequence[float]] | np.ndarray,
        *,
        strict: bool = False,
        tol_psd: float = TOL_PSD,
    ):
        labels = [str(lab) for lab in labels]
        seen: dict[str, int] = {}
        for k, lab in enumerate(labels):
            if lab in seen:
                raise SpecificationError(f"duplicate quantity label {lab!r}")
            seen[lab] = k
        k = len(labels)
        mean = np.array(expectation, dtype=float).reshape(-1)
        cov = np.array(covariance, dtype=float)
        if mean.shape != (k,):
            raise SpecificationError(f"expectation has {mean.size} entries for {k} quantities")
        if cov.shape != (k, k):
            raise SpecificationError(f"covariance has shape {cov.shape}, expected {(k, k)}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise SpecificationError("expectations and covariances must be finite")

        problems = []
        bad = np.argwhere(cov != cov.T)
        for a, b in bad:
            if a < b:
                problems.append(
                    f"Cov({labels[a]},{labels[b]})={cov[a, b]!r} differs from "
                    f"Cov({labels[b]},{labels[a]})={cov[b, a]!r}"
                )
        var = np.diag(cov)
        floor = -tol_psd * max(1.0, float(np.max(np.abs(var)))) if k else 0.0
        for q in np.flatnonzero(var < floor):
            problems.append(f"Var({labels[q]})={var[q]!r} is negative")
        if problems:
            raise SpecificationError("; ".join(problems), problems)

        lo, hi = min_eigen_ratio(cov)
        if lo < -tol_psd * max(hi, 0.0):
            msg = (
                f"covariance is not positive semi-definite: smallest eigenvalue {lo:.6g}, "
                f"largest {hi:.6g}"
            )
            if strict:
                raise SpecificationError(msg)
            warnings.warn(msg, BeliefWarning, stacklevel=2)

        mean.setflags(write=False)
        cov.setflags(write=False)
        self._labels = tuple(labels)
        self._index = MappingProxyType(seen)
        self._mean = mean
        self._cov = cov
        self.min_eigenvalue = lo

    @property
    def quantities(self) -> tuple[QuantityId, ...]:
        return tuple(QuantityId(k, lab) for k, lab in enumerate(self._labels))

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def expectation(self) -> np.ndarray:
        return self._mean

    @property
    def covariance(self) -> np.ndarray:
        return self._cov

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, qid: object) -> bool:
        return isinstance(qid, (int, np.integer)) and 0 <= qid < len(self._labels)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise SpecificationError(f"unregistered quantity {label!r}") from None

    def ids(self, labels: Iterable[str]) -> list[int]:
        return [self.index(lab) for lab in labels]

    def label(self, qid: int) -> str:
        return self._labels[qid]

    def require(self, qids: Iterable[int]) -> None:
        missing = sorted(q for q in set(qids) if q not in self)
        if missing:
            names = ", ".join(f"#{q}" for q in missing)
            raise SpecificationError(f"unregistered quantity {names} (store has {len(self)})")

    def __repr__(self) -> str:
        return f"BeliefStore({len(self)} quantities)"


def _merge(pairs: Iterable[tuple[int, float]]) -> Terms:
    acc: dict[int, float] = {}
    for q, c in pairs:
        q = int(q)
        acc[q] = acc.get(q, 0.0) + float(c)
    return tuple(sorted((q, c) for q, c in acc.items() if c != 0.0))


@dataclass(frozen=True)
class Affine:
    """``constant + sum(c * q) + sum(c * (q - E q))`` over registered quantities.

    Centered terms keep the expectation of adjusted objects exact: they
    contribute nothing to :meth:`expectation` regardless of rounding.
    """

    constant: float = 0.0
    terms: Terms = ()
    centered: Terms = ()

    def __post_init__(self):
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "terms", _merge(self.terms))
        object.__setattr__(self, "centered", _merge(self.centered))

    @property
    def is_zero(self) -> bool:
        return self.constant == 0.0 and not self.terms and not self.centered

    @property
    def is_constant(self) -> bool:
        return not self.terms and not self.centered

    def linear(self) -> Terms:
        """Coefficients of the random part, centered and raw terms combined."""
        if not self.centered:
            return self.terms
        if not self.terms:
            return self.centered
        return _merge(self.terms + self.centered)

    def quantities(self) -> set[int]:
        return {q for q, _ in self.terms} | {q for q, _ in self.centered}

    def expectation(self, mean: np.ndarray) -> float:
        total = self.constant
        for q, c in self.terms:
            total += c * mean[q]
        return float(total)

    def value(self, values: Mapping[int, float], mean: np.ndarray | None = None) -> float:
        total = self.constant
        for q, c in self.terms:
            total += c * values[q]
        if self.centered:
            if mean is None:
                raise ValueError("realizing centered terms needs the store expectations")
            for q, c in self.centered:
                total += c * (values[q] - mean[q])
        return float(total)

    def __add__(self, other: Affine) -> Affine:
        return Affine(
            self.constant + other.constant,
            self.terms + other.terms,
            self.centered + other.centered,
        )

    def scale(self, a: float) -> Affine:
        a = float(a)
        return Affine(
            a * self.constant,
            tuple((q, a * c) for q, c in self.terms),
            tuple((q, a * c) for q, c in self.centered),
        )

    def __neg__(self) -> Affine:
        return self.scale(-1.0)


_ZERO = Affine()


class RandomMatrix:
    """Symmetric random matrix with one affine form per upper-triangle slot.

    Slots are 0-based ``(i, j)`` pairs; ``(j, i)`` names the same slot, so
    symmetry holds by construction. Zero slots are not stored.
    """

    __slots__ = ("_dim", "_entries", "_hash")

    def __init__(self, dim: int, entries: Mapping[Slot, Affine] | Iterable = ()):
        dim = int(dim)
        if dim < 1:
            raise ValueError(f"dimension must be positive, got {dim}")
        items = entries.items() if isinstance(entries, Mapping) else entries
        table: dict[Slot, Affine] = {}
        for (i, j), form in items:
            if not (0 <= i < dim and 0 <= j < dim):
                raise ValueError(f"slot ({i},{j}) outside a {dim}x{dim} matrix")
            slot = canonical_slot(int(i), int(j))
            if slot in table:
                raise ValueError(f"slot {slot} given twice")
            if not isinstance(form, Affine):
                form = Affine(float(form))
            if not form.is_zero:
                table[slot] = form
        self._dim = dim
        self._entries = MappingProxyType(dict(sorted(table.items())))
        self._hash = None

    @classmethod
    def zeros(cls, dim: int) -> RandomMatrix:
        return cls(dim)

    @classmethod
    def constant(cls, matrix) -> RandomMatrix:
        arr = np.asarray(matrix, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"constant matrix must be square, got shape {arr.shape}")
        if not np.array_equal(arr, arr.T):
            raise ValueError("constant matrix must be symmetric")
        r = arr.shape[0]
        return cls(r, {s: Affine(arr[s]) for s in slots(r)})

    @classmethod
    def single(cls, dim: int, slot: Slot, qid: int, coef: float = 1.0, constant: float = 0.0):
        """One quantity (times ``coef``, plus ``constant``) at one slot."""
        return cls(dim, {slot: Affine(constant, ((qid, coef),))})

    @classmethod
    def from_quantities(cls, dim: int, placement: Mapping[Slot, int]) -> RandomMatrix:
        return cls(dim, {s: Affine(0.0, ((q, 1.0),)) for s, q in placement.items()})

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def entries(self) -> Mapping[Slot, Affine]:
        return self._entries

    def entry(self, i: int, j: int) -> Affine:
        return self._entries.get(canonical_slot(i, j), _ZERO)

    def quantities(self) -> set[int]:
        out: set[int] = set()
        for form in self._entries.values():
            out |= form.quantities()
        return out

    @property
    def is_constant(self) -> bool:
        return all(f.is_constant for f in self._entries.values())

    def realize(self, values: Mapping[int, float], store: BeliefStore | None = None) -> np.ndarray:
        """Substitute observed quantity values and return the dense matrix."""
        mean = store.expectation if store is not None else None
        out = np.zeros((self._dim, self._dim))
        for (i, j), form in self._entries.items():
            out[i, j] = out[j, i] = form.value(values, mean)
        return out

    def _combine(self, other: RandomMatrix, sign: float) -> RandomMatrix:
        if not isinstance(other, RandomMatrix):
            return NotImplemented
        _check_dims(self, other)
        table = dict(self._entries)
        for slot, form in other._entries.items():
            form = form if sign > 0 else -form
            table[slot] = table[slot] + form if slot in table else form
        return RandomMatrix(self._dim, table)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, a):
        if not isinstance(a, (int, float, np.floating, np.integer)):
            return NotImplemented
        return RandomMatrix(self._dim, {s: f.scale(a) for s, f in self._entries.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, RandomMatrix):
            return NotImplemented
        return self._dim == other._dim and dict(self._entries) == dict(other._entries)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._dim, tuple(self._entries.items())))
        return self._hash

    def __repr__(self):
        body = ", ".join(f"{s}: {f}" for s, f in self._entries.items())
        return f"RandomMatrix(dim={self._dim}, {{{body}}})"


def _check_dims(P: RandomMatrix, Q: RandomMatrix) -> None:
    if P.dim != Q.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {Q.dim}")


def expectation_matrix(P: RandomMatrix, store: BeliefStore) -> np.ndarray:
    store.require(P.quantities())
    out = np.zeros((P.dim, P.dim))
    for (i, j), form in P.entries.items():
        out[i, j] = out[j, i] = form.expectation(store.expectation)
    return out


def center(P: RandomMatrix, store: BeliefStore) -> RandomMatrix:
    """``P - E(P)``, with the random part kept as centered terms."""
    store.require(P.quantities())
    return RandomMatrix(
        P.dim,
        {s: Affine(0.0, (), f.linear()) for s, f in P.entries.items() if not f.is_constant},
    )


def inner_product(P: RandomMatrix, Q: RandomMatrix, store: BeliefStore) -> float:
    """``E(Tr(PQ))`` expanded bilinearly from the store.

    Uses a correctly rounded sum, so the result is exactly symmetric in
    its arguments and independent of term order.
    """
    _check_dims(P, Q)
    store.require(P.quantities() | Q.quantities())
    mean, cov = store.expectation, store.covariance
    parts: list[float] = []
    for slot in P.entries.keys() & Q.entries.keys():
        a, b = P.entries[slot], Q.entries[slot]
        w = slot_weight(slot)
        parts.append(w * (a.expectation(mean) * b.expectation(mean)))
        la, lb = a.linear(), b.linear()
        if la and lb:
            ia, ca = zip(*la)
            ib, cb = zip(*lb)
            block = np.outer(ca, cb) * cov[np.ix_(ia, ib)]
            parts.extend((w * block).ravel().tolist())
    return math.fsum(parts)


def distance_sq(P: RandomMatrix, Q: RandomMatrix, store: BeliefStore, tol: float = TOL_NUM) -> float:
    """Expected squared Frobenius distance ``E(||P - Q||_F^2)``."""
    diff = P - Q
    val = inner_product(diff, diff, store)
    if val >= 0.0:
        return val
    scale = max(1.0, inner_product(P, P, store) + inner_product(Q, Q, store))
    if val >= -tol * scale:
        return 0.0
    raise SpecificationError(
        f"negative expected squared distance {val:.6g}: store covariance is not PSD"
    )


def equivalent(P: RandomMatrix, Q: RandomMatrix, store: BeliefStore, tol: float = TOL_EQ) -> bool:
    """True when P and Q are the same element of the quotient space."""
    scale = max(1.0, inner_product(P, P, store), inner_product(Q, Q, store))
    return distance_sq(P, Q, store) <= tol * scale


def linear_coefficients(members: Sequence[RandomMatrix], store: BeliefStore) -> np.ndarray:
    """Dense array ``A[t, s, q]``: coefficient of quantity q in slot s of member t."""
    if not members:
        return np.zeros((0, 0, len(store)))
    r = members[0].dim
    index = {s: k for k, s in enumerate(slots(r))}
    out = np.zeros((len(members), len(index), len(store)))
    for t, P in enumerate(members):
        if P.dim != r:
            raise ValueError(f"dimension mismatch: {P.dim} vs {r}")
        store.require(P.quantities())
        for slot, form in P.entries.items():
            for q, c in form.linear():
                out[t, index[slot], q] = c
    return out


def slot_weights(r: int) -> np.ndarray:
    return np.array([slot_weight(s) for s in slots(r)])


def gram(members: Sequence[RandomMatrix], store: BeliefStore) -> np.ndarray:
    """Gram matrix of the centered members, ``G[s, t] = (P_s - E P_s, P_t - E P_t)``."""
    return cross_gram(members, members, store, symmetric=True)


def cross_gram(
    left: Sequence[RandomMatrix],
    right: Sequence[RandomMatrix],
    store: BeliefStore,
    symmetric: bool = False,
) -> np.ndarray:
    """``K[a, b] = (L_a - E L_a, R_b - E R_b)`` for two families of random matrices."""
    if not left or not right:
        return np.zeros((len(left), len(right)))
    r = left[0].dim
    if right[0].dim != r:
        raise ValueError(f"dimension mismatch: {r} vs {right[0].dim}")
    A = linear_coefficients(left, store)
    B = A if symmetric else linear_coefficients(right, store)
    w = slot_weights(r)
    cov = store.covariance
    out = np.zeros((len(left), len(right)))
    # fixed slot order keeps the summation deterministic
    for s in range(A.shape[1]):
        out += w[s] * (A[:, s, :] @ cov @ B[:, s, :].T)
    if symmetric:
        out = (out + out.T) / 2.0
    return out
