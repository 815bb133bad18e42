"""Projection collections and adjusted expectations for random matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .belief import (
    TOL_PSD,
    Affine,
    BeliefStore,
    RandomMatrix,
    center,
    cross_gram,
    expectation_matrix,
    gram,
    inner_product,
    n_slots,
    slots,
)
from .errors import SpecificationError

PINV_RTOL = 1e-10
LABELS = ("D_S", "D_I", "D_C", "V_I", "C", "custom")


def sym_pinv(G: np.ndarray, rtol: float = PINV_RTOL, tol_psd: float = TOL_PSD) -> tuple[np.ndarray, int]:
    """Pseudo-inverse of a symmetric PSD matrix and its numerical rank.

    Eigenvalues at or below ``rtol * lambda_max`` are discarded. A clearly
    negative eigenvalue means the beliefs behind G are inconsistent.
    """
    k = G.shape[0]
    if k == 0:
        return np.zeros((0, 0)), 0
    lam, vec = np.linalg.eigh(G)
    top = max(float(lam[-1]), 0.0)
    if lam[0] < -tol_psd * top:
        raise SpecificationError(
            f"Gram matrix is not positive semi-definite (eigenvalue {lam[0]:.6g}, "
            f"largest {top:.6g}); the belief store is inconsistent"
        )
    keep = lam > rtol * top
    if top == 0.0 or not keep.any():
        return np.zeros_like(G), 0
    V = vec[:, keep]
    return (V / lam[keep]) @ V.T, int(keep.sum())


@dataclass(frozen=True)
class Collection:
    """Ordered family of random matrices spanning a projection subspace.

    ``observed`` holds one realized matrix per member; each must vanish
    wherever the member has no entry.
    """

    label: str
    members: tuple[RandomMatrix, ...]
    observed: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"collection label must be one of {LABELS}, got {self.label!r}")
        members = tuple(self.members)
        object.__setattr__(self, "members", members)
        dims = {P.dim for P in members}
        if len(dims) > 1:
            raise ValueError(f"collection members have mixed dimensions {sorted(dims)}")
        if self.observed is None:
            return
        observed = tuple(np.array(d, dtype=float) for d in self.observed)
        if len(observed) != len(members):
            raise ValueError(f"{len(observed)} observations for {len(members)} members")
        for t, (P, d) in enumerate(zip(members, observed)):
            if d.shape != (P.dim, P.dim):
                raise ValueError(f"observation {t} has shape {d.shape}, expected {(P.dim, P.dim)}")
            if not np.array_equal(d, d.T):
                raise ValueError(f"observation {t} is not symmetric")
            for i, j in slots(P.dim):
                if d[i, j] != 0.0 and (i, j) not in P.entries:
                    raise ValueError(f"observation {t} is nonzero at ({i},{j}) where the member is zero")
            d.setflags(write=False)
        object.__setattr__(self, "observed", observed)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def dim(self) -> int | None:
        return self.members[0].dim if self.members else None

    def observe(self, values: Mapping[int, float], store: BeliefStore | None = None) -> Collection:
        """Attach observations by substituting quantity values into every member."""
        return Collection(self.label, self.members, tuple(P.realize(values, store) for P in self.members))


def union(collections: Sequence[Collection], label: str = "custom") -> Collection:
    if len(collections) == 1 and label == "custom":
        return collections[0]
    members = tuple(P for D in collections for P in D.members)
    if all(D.observed is not None for D in collections):
        observed = tuple(d for D in collections for d in D.observed)
    else:
        observed = None
    return Collection(label, members, observed)


def _slot_values(s_ids: Sequence[int], s_obs, r: int) -> dict[int, float]:
    s_obs = np.asarray(s_obs, dtype=float)
    if s_obs.shape != (r, r):
        raise ValueError(f"observed matrix has shape {s_obs.shape}, expected {(r, r)}")
    return {q: float(s_obs[s]) for q, s in zip(s_ids, slots(r))}


def build_collections(s_ids: Sequence[int], r: int, s_obs=None) -> dict[str, Collection]:
    """The sample collections D_S, D_I and D_C.

    ``s_ids`` are the registry ids of ``S_ij`` in slot order. D_C places every
    sample quantity at every slot, quantity-major, as in the 2x2 display
    (S_11 at each slot, then S_12, then S_22).
    """
    sl = slots(r)
    if len(s_ids) != n_slots(r):
        raise SpecificationError(f"expected {n_slots(r)} sample quantities for r={r}, got {len(s_ids)}")
    whole = RandomMatrix.from_quantities(r, dict(zip(sl, s_ids)))
    individual = [RandomMatrix.from_quantities(r, {s: q}) for s, q in zip(sl, s_ids)]
    complete = [RandomMatrix.from_quantities(r, {s: q}) for q in s_ids for s in sl]
    out = {
        "D_S": Collection("D_S", (whole,)),
        "D_I": Collection("D_I", tuple(individual)),
        "D_C": Collection("D_C", tuple(complete)),
    }
    if s_obs is not None:
        values = _slot_values(s_ids, s_obs, r)
        out = {k: D.observe(values) for k, D in out.items()}
    return out


def build_constant_basis(r: int) -> Collection:
    """Unit-pattern basis of the constant symmetric matrices (observed as themselves)."""
    if r < 1:
        raise ValueError(f"dimension must be positive, got {r}")
    members = []
    for i, j in slots(r):
        E = np.zeros((r, r))
        E[i, j] = E[j, i] = 1.0
        members.append(RandomMatrix.constant(E))
    return Collection("C", tuple(members), tuple(P.realize({}) for P in members))


def build_individual_population(v_ids: Sequence[int], r: int) -> Collection:
    """V_I: each population quantity ``V_ij`` alone at its own slot."""
    if len(v_ids) != n_slots(r):
        raise SpecificationError(f"expected {n_slots(r)} population quantities for r={r}, got {len(v_ids)}")
    return Collection("V_I", tuple(RandomMatrix.from_quantities(r, {s: q}) for s, q in zip(slots(r), v_ids)))


def population_matrix(v_ids: Sequence[int], r: int) -> RandomMatrix:
    """The whole population matrix V as one random object."""
    return RandomMatrix.from_quantities(r, dict(zip(slots(r), v_ids)))


@dataclass(frozen=True)
class Projection:
    """Orthogonal projection of a random matrix onto a collection's span."""

    coefficients: np.ndarray
    adjusted: RandomMatrix
    rank: int
    prior_norm_sq: float
    resolved_norm_sq: float
    residual_norm_sq: float

    @property
    def resolution(self) -> float:
        if self.prior_norm_sq <= 0.0:
            return 0.0
        return self.resolved_norm_sq / self.prior_norm_sq


@dataclass(frozen=True)
class AdjustmentResult(Projection):
    """A projection plus its realized value after observing the collection."""

    realized: np.ndarray
    label: str


def _unique_members(members: Sequence[RandomMatrix]) -> list[int]:
    seen: set[RandomMatrix] = set()
    keep = []
    for t, P in enumerate(members):
        if P not in seen:
            seen.add(P)
            keep.append(t)
    return keep


def _as_collection(D) -> Collection:
    if isinstance(D, Collection):
        return D
    return union(list(D))


def project(B: RandomMatrix, D, store: BeliefStore, rtol: float = PINV_RTOL) -> Projection:
    """Project ``B`` onto ``span(D)`` plus constants; no observations needed.

    Duplicate members are dropped before the Gram solve and get coefficient
    zero; the remaining coefficients are the minimum-norm solution.
    """
    D = _as_collection(D)
    members = D.members
    if members and members[0].dim != B.dim:
        raise ValueError(f"dimension mismatch: target {B.dim}, collection {members[0].dim}")
    keep = _unique_members(members)
    uniq = [members[t] for t in keep]
    G = gram(uniq, store)
    g = cross_gram([B], uniq, store)[0] if uniq else np.zeros(0)
    Gp, rank = sym_pinv(G, rtol)
    a = Gp @ g
    coefficients = np.zeros(len(members))
    coefficients[keep] = a

    cB = center(B, store)
    table: dict = {}
    for t in keep:
        if coefficients[t] == 0.0:
            continue
        for slot, form in center(members[t], store).entries.items():
            scaled = form.scale(coefficients[t])
            table[slot] = table[slot] + scaled if slot in table else scaled
    fitted = RandomMatrix(B.dim, table)
    prior = expectation_matrix(B, store)
    adjusted = RandomMatrix(
        B.dim,
        {s: Affine(prior[s]) + fitted.entry(*s) for s in slots(B.dim)},
    )
    residual = cB - fitted
    return Projection(
        coefficients=coefficients,
        adjusted=adjusted,
        rank=rank,
        prior_norm_sq=inner_product(cB, cB, store),
        resolved_norm_sq=float(a @ G @ a) if len(a) else 0.0,
        residual_norm_sq=inner_product(residual, residual, store),
    )


def adjust(B: RandomMatrix, D, store: BeliefStore, rtol: float = PINV_RTOL) -> AdjustmentResult:
    """Adjusted expectation of ``B`` by an observed collection (or list of them)."""
    D = _as_collection(D)
    if D.observed is None:
        raise SpecificationError(f"collection {D.label} has no observations")
    proj = project(B, D, store, rtol)
    realized = expectation_matrix(B, store)
    for a, P, d in zip(proj.coefficients, D.members, D.observed):
        if a != 0.0:
            realized = realized + a * (d - expectation_matrix(P, store))
    return AdjustmentResult(
        coefficients=proj.coefficients,
        adjusted=proj.adjusted,
        rank=proj.rank,
        prior_norm_sq=proj.prior_norm_sq,
        resolved_norm_sq=proj.resolved_norm_sq,
        residual_norm_sq=proj.residual_norm_sq,
        realized=realized,
        label=D.label,
    )


@dataclass(frozen=True)
class StepwiseResult:
    steps: list[AdjustmentResult]
    labels: list[str]

    @property
    def resolutions(self) -> list[float]:
        return [s.resolution for s in self.steps]

    @property
    def increments(self) -> list[float]:
        out, prev = [], 0.0
        for res in self.resolutions:
            out.append(res - prev)
            prev = res
        return out


def adjust_stepwise(
    B: RandomMatrix, sequence: Sequence[Collection], store: BeliefStore, rtol: float = PINV_RTOL
) -> StepwiseResult:
    """Adjust by the cumulative unions ``D_1``, ``D_1 + D_2``, ..."""
    steps = [adjust(B, union(list(sequence[: k + 1])), store, rtol) for k in range(len(sequence))]
    return StepwiseResult(steps, [D.label for D in sequence])


def adjust_elementwise_oracle(
    v_ids: Sequence[int], s_ids: Sequence[int], store: BeliefStore, observations, rtol: float = PINV_RTOL
) -> np.ndarray:
    """Scalar Bayes linear adjustment of the vector (V_ij) by the vector (S_ij).

    ``E(V) + Cov(V, S) Cov(S, S)^+ (s - E(S))``, computed straight from the
    store without any matrix-space machinery. ``observations`` is either the
    observed vector in slot order or the full observed matrix.
    """
    v_ids, s_ids = list(v_ids), list(s_ids)
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 2:
        obs = np.array([obs[s] for s in slots(obs.shape[0])])
    mean, cov = store.expectation, store.covariance
    css = cov[np.ix_(s_ids, s_ids)]
    cvs = cov[np.ix_(v_ids, s_ids)]
    pinv, _ = sym_pinv(css, rtol)
    return mean[v_ids] + cvs @ (pinv @ (obs - mean[s_ids]))


def collection_resolution(targets, D, store: BeliefStore, rtol: float = PINV_RTOL) -> float:
    """System resolution of a collection of targets: ``Tr(T) / rank``.

    ``T = Var(B)^+ Var(E_D(B))`` with variances measured by the matrix inner
    product; for one target this is its ordinary resolution.
    """
    targets = targets.members if isinstance(targets, Collection) else list(targets)
    D = _as_collection(D)
    uniq = [D.members[t] for t in _unique_members(D.members)]
    Vb = gram(targets, store)
    Vb_pinv, rank_b = sym_pinv(Vb, rtol)
    if rank_b == 0 or not uniq:
        return 0.0
    Gp, _ = sym_pinv(gram(uniq, store), rtol)
    K = cross_gram(targets, uniq, store)
    resolved = K @ Gp @ K.T
    return float(np.trace(Vb_pinv @ resolved)) / rank_b
