import numpy as np
import pytest

from rwre_ldp.env_model import EnvironmentLaw, ProbVec


def random_elliptic(rng, dim, kappa):
    """Elliptic probability vector: kappa floor plus a Dirichlet bulk."""
    w = rng.dirichlet(np.ones(2 * dim))
    return ProbVec(dim, kappa + (1.0 - 2 * dim * kappa) * w)


def random_zero_drift(rng, dim, kappa):
    half = rng.dirichlet(np.ones(dim)) / 2.0
    half = kappa + (0.5 - dim * kappa) * half * 2.0
    probs = np.empty(2 * dim)
    probs[0::2] = half
    probs[1::2] = half
    return ProbVec(dim, probs / probs.sum())


def d1_law(ps, kappa, weights=None):
    atoms = tuple(ProbVec(1, [p, 1.0 - p]) for p in ps)
    if weights is None:
        weights = np.full(len(atoms), 1.0 / len(atoms))
    return EnvironmentLaw(1, atoms, np.asarray(weights), kappa)


@pytest.fixture(scope="session")
def mirror_pair():
    """Two d=2 atoms swapped by the e_1 reflection; the workhorse instance."""
    s1 = ProbVec(2, [0.4, 0.1, 0.3, 0.2])
    s2 = ProbVec(2, [0.1, 0.4, 0.3, 0.2])
    return s1, s2


@pytest.fixture(scope="session")
def mirror_law(mirror_pair):
    return EnvironmentLaw(2, mirror_pair, np.array([0.5, 0.5]), 0.1)


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile the numba kernels outside any timed section."""
    from rwre_ldp.env_model import Box, PeriodicEnvironment, sample_environment
    from rwre_ldp.simulate import importance_sampling_return, run_walk

    env = PeriodicEnvironment.homogeneous(ProbVec(1, [0.5, 0.5]))
    run_walk(env, (0,), 10, seed=0)
    importance_sampling_return(env, 2, 10, seed=0)
    law = d1_law([0.5], kappa=0.5)
    omega = sample_environment(law, Box((-12,), (12,)), seed=0)
    run_walk(omega, (0,), 10, seed=0)
    importance_sampling_return(omega, 2, 10, seed=0, theta=np.zeros(1))
    return True
