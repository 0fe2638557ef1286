import numpy as np
import pytest

from splatstream.core import Camera, GaussianArrays


def random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_arrays(rng, n, mean_lo=(-0.5, -0.5, 2.0), mean_hi=(0.5, 0.5, 4.0),
                  scale_lo=0.02, scale_hi=0.1, opacity_lo=0.1, opacity_hi=0.9):
    return GaussianArrays(
        rng.uniform(mean_lo, mean_hi, size=(n, 3)),
        random_unit_quats(rng, n),
        np.exp(rng.uniform(np.log(scale_lo), np.log(scale_hi), size=(n, 3))),
        rng.uniform(opacity_lo, opacity_hi, size=n),
        rng.uniform(0.0, 1.0, size=(n, 3)),
    )


def identity_camera(width=32, height=32, f=60.0):
    return Camera(width, height, f, f, width / 2.0, height / 2.0,
                  np.eye(3), np.zeros(3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once before timing-sensitive tests run."""
    from splatstream.raster import render_arrays, render_arrays_backward

    cam = identity_camera(8, 8)
    arrays = random_arrays(np.random.default_rng(0), 3)
    render_arrays(cam, arrays)
    render_arrays_backward(cam, arrays, np.ones((8, 8, 3)))
