import numpy as np
import pytest

from mvsample import geometry, gsplat


@pytest.fixture(scope="session")
def orbit24():
    return geometry.make_orbit_cameras(24, 20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_cloud(rng, n, span=0.7):
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return gsplat.GaussianCloud(
        p=rng.uniform(-span, span, (n, 3)),
        s=rng.uniform(0.02, 0.3, (n, 3)),
        q=q,
        alpha=rng.uniform(0.05, 1.0, n),
        c=rng.uniform(0.0, 1.0, (n, 3)),
    )
