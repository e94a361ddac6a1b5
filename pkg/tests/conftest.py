import numpy as np
import pytest

from partreg.geom import PointCloud, RigidTransform


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Proper rotation via QR of a Gaussian matrix."""
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def random_transform(rng: np.random.Generator, max_translation: float = 5.0) -> RigidTransform:
    return RigidTransform.from_noisy(
        random_rotation(rng), rng.uniform(-max_translation, max_translation, 3)
    )


def random_cloud(rng: np.random.Generator, n: int, scale: float = 10.0) -> PointCloud:
    return PointCloud(rng.uniform(-scale, scale, (n, 3)))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
