import numpy as np
import pytest

from kamlattice.storage.local.config import DEFAULT_TAU
from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.model.bbm import bbm_model
from kamlattice.tasks.model.gpc import gpc_model


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_bbm():
    """BBM lattice of radius 6 at tau = 1 with the first two modes excited (quartic-resonant, no normal form)."""
    return bbm_model(6, 1.0, (1, 2))


@pytest.fixture(scope="session")
def bbm_lattice():
    """BBM lattice of radius 6 at the default tau, free of low-order resonances among its first modes."""
    return bbm_model(6, DEFAULT_TAU, (1, 2))


@pytest.fixture(scope="session")
def small_gpc():
    """One-dimensional gPC lattice of radius 3 with a single tangent site beyond L = 10."""
    return gpc_model(3, (1.5,), 1, ((11,),))


def random_poly(rng: np.random.Generator, n_angles: int, n_sites: int, terms: int = 6, scale: float = 1.0) -> HamiltonianPoly:
    """Sum of random monomials of degree at most two in ``z, z̄`` and one in ``y``, with ``|k| ≤ 1``."""
    out = HamiltonianPoly.zero(n_angles)
    for _ in range(terms):
        k = rng.integers(-1, 2, size=n_angles)
        gamma = np.zeros(n_angles, dtype=int)
        if rng.random() < 0.5:
            gamma[rng.integers(n_angles)] = 1
        alpha = {int(rng.integers(n_sites)): 1} if rng.random() < 0.7 else {}
        beta = {int(rng.integers(n_sites)): 1} if rng.random() < 0.7 else {}
        coeff = scale * complex(rng.standard_normal(), rng.standard_normal())
        out.iadd(HamiltonianPoly.monomial(n_angles, coeff, k=k, gamma=gamma, alpha=alpha, beta=beta))
    return out


@pytest.fixture
def poly_factory(rng):
    def make(n_angles: int = 2, n_sites: int = 3, terms: int = 6, scale: float = 1.0) -> HamiltonianPoly:
        return random_poly(rng, n_angles, n_sites, terms, scale)
    return make
