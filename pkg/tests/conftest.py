import numpy as np
import pytest

from qbench import PhantomObject, PhantomSpec, Volume, generate


def pure_noise(sigma, seed, width=64, height=64, n_slices=20):
    return generate(PhantomSpec(width=width, height=height, n_slices=n_slices, sigma=sigma, seed=seed))


def const_phantom(value, sigma, seed, width=64, height=64, n_slices=20):
    return generate(
        PhantomSpec(width=width, height=height, n_slices=n_slices, background_value=value, sigma=sigma, seed=seed)
    )


def disk_phantom(radius, value, sigma, seed, width=64, height=64, n_slices=20, center=None):
    center = center or (width / 2, height / 2)
    obj = PhantomObject("disk", center, radius, value)
    return generate(PhantomSpec(width=width, height=height, n_slices=n_slices, objects=(obj,), sigma=sigma, seed=seed))


def disk_mask(width, height, center, radius):
    yy, xx = np.mgrid[0:height, 0:width]
    return (xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= radius**2


def volume_from(data, voxel=(1.0, 1.0, 1.0)):
    return Volume.from_array(np.asarray(data, dtype=float), voxel)


@pytest.fixture
def disk_volume():
    return disk_phantom(radius=20, value=1000.0, sigma=100.0, seed=3)
