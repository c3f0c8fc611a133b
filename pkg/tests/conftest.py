import numpy as np
import pytest
from scipy.stats import ortho_group, unitary_group

from mpsprep.symmetry import random_symmetric_mps, right_canonicalize


def random_unitary(n: int, seed: int, real: bool = False) -> np.ndarray:
    if n == 1:
        rng = np.random.default_rng(seed)
        if real:
            return np.array([[rng.choice([-1.0, 1.0])]])
        return np.array([[np.exp(1j * rng.uniform(-np.pi, np.pi))]])
    gen = ortho_group if real else unitary_group
    return gen.rvs(n, random_state=seed)


def feasible_charge(n: int) -> tuple[int, int]:
    return (n, n % 2)


def canonical_mps(n: int, chi: int, seed: int, kind: str = "real", **kw):
    return right_canonicalize(random_symmetric_mps(n, chi, feasible_charge(n), seed=seed, scalar_kind=kind, **kw))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
