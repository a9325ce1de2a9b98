import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from shapemate.bvh import build_bvh
from shapemate.mesh import BUNDLED, bundled_mesh, normalize_mesh

settings.register_profile("repo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def meshes():
    return {name: normalize_mesh(bundled_mesh(name)) for name in BUNDLED}


@pytest.fixture(scope="session")
def bvhs(meshes):
    return {name: build_bvh(m) for name, m in meshes.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_set():
    from shapemate.toy import toy_pairs

    return toy_pairs()
