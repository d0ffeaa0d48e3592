import numpy as np
import pytest

import ducclab as dl


@pytest.fixture(scope="session")
def dimer_basis():
    return dl.build_basis(4, 2)


@pytest.fixture(scope="session")
def dimer_H(dimer_basis):
    return dl.build_hubbard(2, 1.0, 4.0, dimer_basis)


@pytest.fixture(scope="session")
def dimer_part():
    return dl.homo_lumo_partition(4, 2, 1, 1)


@pytest.fixture(scope="session")
def dimer_ref(dimer_part):
    return dimer_part.reference()


@pytest.fixture(scope="session")
def m8_basis():
    return dl.build_basis(8, 4)


@pytest.fixture(scope="session")
def m8_ref():
    return dl.aufbau_reference(8, 4)


@pytest.fixture(scope="session")
def m8_part():
    return dl.homo_lumo_partition(8, 4, 2, 2)


@pytest.fixture(scope="session")
def m6_basis():
    return dl.build_basis(6, 3)


@pytest.fixture(scope="session")
def m6_ref():
    return dl.aufbau_reference(6, 3)


@pytest.fixture(scope="session")
def m6_part():
    return dl.homo_lumo_partition(6, 3, 1, 2)


def random_state(basis, rng, ref=None, min_ref_weight=0.3):
    """Random normalized state with a guaranteed reference component."""
    psi = rng.normal(size=basis.size) + 1j * rng.normal(size=basis.size)
    psi /= np.linalg.norm(psi)
    if ref is not None:
        i0 = basis.index_of(ref)
        psi[i0] += min_ref_weight * np.exp(1j * np.angle(psi[i0])) * 3
        psi /= np.linalg.norm(psi)
    return psi
