import numpy as np
import pytest

from sphereflow.assembly import build_quadrature
from sphereflow.fields import ScalarFrame, random_band_coeffs, synth_rotation
from sphereflow.harmonics import BasisSpec, mesh_basis
from sphereflow.mesh import build_icosphere

ROTATION_SEED = 1234  # fixed seed of the recovery fixture
ROTATION_DELTA = 0.01


@pytest.fixture(scope="session")
def ico2():
    return build_icosphere(2)


@pytest.fixture(scope="session")
def ico3():
    return build_icosphere(3)


@pytest.fixture(scope="session")
def ico4():
    return build_icosphere(4)


@pytest.fixture(scope="session")
def basis2_n3(ico2):
    return mesh_basis(ico2, BasisSpec(3))


@pytest.fixture(scope="session")
def basis4_n15(ico4):
    return mesh_basis(ico4, BasisSpec(15))


@pytest.fixture(scope="session")
def rotation_truth(ico4):
    base = random_band_coeffs(10, seed=ROTATION_SEED)
    return synth_rotation(ico4, base, (0.0, 0.0, 1.0), ROTATION_DELTA)


@pytest.fixture(scope="session")
def rotation_qt(basis4_n15, rotation_truth):
    return build_quadrature(basis4_n15, rotation_truth.frame0,
                            rotation_truth.frame1)


@pytest.fixture(scope="session")
def small_qt(ico2, basis2_n3):
    rng = np.random.default_rng(99)
    f0 = ScalarFrame(mesh=ico2, values=rng.random(ico2.vertex_count))
    f1 = ScalarFrame(mesh=ico2, values=rng.random(ico2.vertex_count))
    return build_quadrature(basis2_n3, f0, f1)
