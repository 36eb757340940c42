"""The compiled kernels and their numpy twins must agree."""
import numpy as np
import pytest

from pyraflow import _backend, _kernels_py

from .conftest import BACKENDS


@pytest.fixture
def compiled():
    if "cython" not in BACKENDS:
        pytest.skip("compiled kernels not built")
    return _backend.get_kernels("cython").module


@pytest.fixture
def case(rng):
    H, W, C = 9, 11, 3
    I1 = rng.normal(size=(H, W, C))
    I2 = rng.normal(size=(H, W, C))
    flow = rng.uniform(-4, 4, size=(H, W, 2))
    flow[0, 0] = (2.0, -1.0)  # exact integers exercise the cell rule
    return I1, I2, flow


def test_gather(compiled, rng):
    img = rng.normal(size=(6, 7, 2))
    u = np.concatenate([rng.uniform(-2, 8, 100), np.arange(7.0)])
    v = np.concatenate([rng.uniform(-2, 7, 100), np.arange(7.0) % 6])
    for threads in (1, 3):
        np.testing.assert_array_equal(compiled.gather(img, u, v, num_threads=threads),
                                      _kernels_py.gather(img, u, v))


def test_gather_grad(compiled, rng):
    img = rng.normal(size=(6, 7, 2))
    u = np.concatenate([rng.uniform(-2, 8, 100), np.arange(7.0)])
    v = np.concatenate([rng.uniform(-2, 7, 100), np.arange(7.0) % 6])
    for a, b in zip(compiled.gather_grad(img, u, v), _kernels_py.gather_grad(img, u, v)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


@pytest.mark.parametrize("sad", [False, True])
@pytest.mark.parametrize("threads", [1, 4])
def test_sample_volume(compiled, case, sad, threads):
    I1, I2, flow = case
    a = compiled.sample_volume(I1, I2, flow, 2, sad, num_threads=threads)
    b = _kernels_py.sample_volume(I1, I2, flow, 2, sad)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@pytest.mark.parametrize("sad", [False, True])
def test_sample_volume_adjoint(compiled, case, rng, sad):
    I1, I2, flow = case
    up = rng.normal(size=I1.shape[:2] + (25,))
    for threads in (1, 4):
        a = compiled.sample_volume_adjoint(I1, I2, flow, 2, sad, up, num_threads=threads)
        b = _kernels_py.sample_volume_adjoint(I1, I2, flow, 2, sad, up)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_splat(compiled, rng):
    flow = rng.uniform(-3, 3, size=(8, 8, 2))
    flow[2, 2] = (1.0, 0.0)
    valid = (rng.uniform(size=(8, 8)) > 0.2).astype(np.uint8)
    for a, b in zip(compiled.splat(flow, valid), _kernels_py.splat(flow, valid)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_splat_is_deterministic(compiled, rng):
    flow = rng.uniform(-3, 3, size=(16, 16, 2))
    valid = np.ones((16, 16), np.uint8)
    first = compiled.splat(flow, valid)
    for _ in range(3):
        again = compiled.splat(flow, valid)
        for a, b in zip(first, again):
            np.testing.assert_array_equal(a, b)


class TestSelection:
    def test_numpy_forced(self):
        assert _backend.get_kernels("numpy").name == "numpy"

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            _backend.get_kernels("fortran")

    def test_use_backend_round_trip(self):
        prev = _backend.use_backend("numpy")
        try:
            assert _backend.BACKEND == "numpy"
        finally:
            _backend.use_backend(prev)
        assert _backend.BACKEND == prev

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv("PYRAFLOW_THREADS", "3")
        assert _backend.thread_count() == 3
        monkeypatch.setenv("PYRAFLOW_THREADS", "0")
        assert _backend.thread_count() >= 1
        monkeypatch.setenv("PYRAFLOW_THREADS", "-2")
        with pytest.raises(ValueError):
            _backend.thread_count()
