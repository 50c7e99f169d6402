import numpy as np
import pytest

from topomoe.molecule import PointCloud


def make_cloud(rng, n, box=5.0, elements=(1, 6, 7, 8), mol_id=None):
    """Random point cloud with guaranteed pairwise separation."""
    while True:
        coords = rng.uniform(0.0, box, size=(n, 3))
        if n == 1:
            break
        diff = coords[:, None, :] - coords[None, :, :]
        d2 = (diff**2).sum(-1)
        np.fill_diagonal(d2, np.inf)
        if d2.min() > 1e-4:
            break
    z = rng.choice(elements, size=n)
    return PointCloud(z, coords, id=mol_id or f"cloud{rng.integers(1 << 30)}")


def random_rotation(rng):
    """Uniform random proper rotation matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rigid_motion(cloud, rng, mol_id=None):
    rot = random_rotation(rng)
    shift = rng.uniform(-10, 10, size=3)
    return PointCloud(
        cloud.atom_numbers, cloud.coords @ rot.T + shift, id=mol_id or cloud.id + "_moved"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
