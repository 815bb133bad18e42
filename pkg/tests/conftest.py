import numpy as np
import pytest

from blin.belief import BeliefStore, RandomMatrix, slots
from blin.exchangeable import ExchangeableSpec, n_slots

ACCEPTANCE_RESULTS = []


def random_psd(rng, k, rank=None, scale=1.0):
    rank = k if rank is None else rank
    A = rng.normal(size=(k, rank)) * scale
    return A @ A.T


def random_store(rng, nq, rank=None):
    cov = random_psd(rng, nq, rank)
    cov = (cov + cov.T) / 2
    mean = rng.normal(scale=2.0, size=nq)
    return BeliefStore([f"q{k}" for k in range(nq)], mean, cov)


def random_matrix(rng, r, nq, density=0.6, constants=True):
    table = {}
    for s in slots(r):
        if rng.random() > density:
            continue
        k = rng.integers(1, nq + 1)
        qs = rng.choice(nq, size=k, replace=False)
        terms = tuple((int(q), float(rng.normal())) for q in qs)
        const = float(rng.normal()) if constants else 0.0
        from blin.belief import Affine

        table[s] = Affine(const, terms)
    return RandomMatrix(r, table)


def random_spec(rng, r, gaussian=False):
    """A valid exchangeable spec with E(V) given directly."""
    m = n_slots(r)
    ev = random_psd(rng, r) + 0.5 * np.eye(r)
    ev = (ev + ev.T) / 2
    vp = random_psd(rng, m, scale=rng.uniform(0.2, 1.5))
    vp = (vp + vp.T) / 2
    if gaussian:
        from blin.exchangeable import gaussian_fourth_moments

        u = gaussian_fourth_moments(ev)
    else:
        u = random_psd(rng, m, scale=rng.uniform(0.5, 3.0))
        u = (u + u.T) / 2
    return ExchangeableSpec(r=r, v=vp + u, v_prime=vp, e_v=ev)


def random_observation(rng, spec, n=20):
    """A plausible observed sample covariance: empirical cov of normal draws."""
    X = rng.multivariate_normal(np.zeros(spec.r), spec.expected_v(), size=n)
    S = np.cov(X, rowvar=False).reshape(spec.r, spec.r)
    return (S + S.T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {name}: {detail}")
