"""The compiled and pure-numpy kernels must agree."""

import numpy as np
import pytest

from egoctl import _accel, kernels
from oracles import causal_conv_oracle

pytestmark = pytest.mark.skipif(not _accel.NUMBA_AVAILABLE, reason="numba not installed")


def _scene(rng, n=7, gh=9, gw=11):
    heat = kernels.heatmaps_numpy(rng.uniform(-2, 12, (n, 2)), 1.5, gh, gw)
    disp = rng.uniform(0.5, 4.0, n)
    valid = rng.random(n) > 0.2
    return heat, disp, valid


def test_heatmaps_agree(rng):
    c = rng.uniform(-5, 20, (12, 2))
    np.testing.assert_allclose(kernels.heatmaps_numba(c, 1.3, 13, 17), kernels.heatmaps_numpy(c, 1.3, 13, 17), rtol=1e-12, atol=0)


@pytest.mark.parametrize("lam", [0.0, 1.0, 40.0])
def test_depth_weights_agree(rng, lam):
    heat, disp, valid = _scene(rng)
    a = kernels.depth_weights_numba(heat, disp, valid, lam, 1e-6)
    b = kernels.depth_weights_numpy(heat, disp, valid, lam, 1e-6)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    assert (a[~valid] == 0).all()


def test_depth_weights_no_valid_joint():
    heat = np.ones((3, 2, 2))
    for fn in (kernels.depth_weights_numba, kernels.depth_weights_numpy):
        assert not fn(heat, np.ones(3), np.zeros(3, bool), 1.0, 1e-6).any()


def test_propagate_agrees(rng):
    heat, disp, valid = _scene(rng)
    att = kernels.depth_weights_numpy(heat, disp, valid, 1.0, 1e-6)
    f = rng.normal(size=(heat.shape[0], 4))
    np.testing.assert_allclose(
        kernels.propagate_numba(f, att, heat, valid), kernels.propagate_numpy(f, att, heat, valid), rtol=1e-12, atol=1e-14
    )


def test_splat_agrees(rng):
    heat, _, _ = _scene(rng)
    z = rng.normal(size=(heat.shape[0], 6))
    np.testing.assert_allclose(kernels.splat_numba(z, heat), kernels.splat_numpy(z, heat), rtol=1e-12, atol=1e-14)
    assert kernels.splat_numba(np.zeros((0, 6)), np.zeros((0, 3, 3))).shape == (6, 3, 3)


@pytest.mark.parametrize("kernel", [(1, 1, 1), (3, 3, 3), (2, 1, 3), (4, 5, 3)])
def test_causal_conv_agrees_with_oracle(rng, kernel):
    kt, kh, kw = kernel
    x = rng.normal(size=(5, 3, 6, 7))
    w = rng.normal(size=(2, 3, kt, kh, kw))
    b = rng.normal(size=2)
    ref = causal_conv_oracle(x, w, b)
    np.testing.assert_allclose(kernels.causal_conv3d_numpy(x, w, b), ref, rtol=1e-11, atol=1e-11)
    np.testing.assert_allclose(kernels.causal_conv3d_numba(x, w, b), ref, rtol=1e-11, atol=1e-11)


def test_causal_conv_rejects_even_spatial_kernel():
    with pytest.raises(ValueError):
        kernels.causal_conv3d_numpy(np.zeros((2, 1, 4, 4)), np.zeros((1, 1, 1, 2, 3)), np.zeros(1))
    with pytest.raises(ValueError):
        kernels.causal_conv3d_numba(np.zeros((2, 2, 4, 4)), np.zeros((1, 1, 1, 3, 3)), np.zeros(1))


def test_backend_switch_round_trip():
    prev = _accel.set_backend("numpy")
    try:
        assert _accel.BACKEND == "numpy"
        with pytest.raises(ValueError):
            _accel.set_backend("cuda")
    finally:
        _accel.set_backend(prev)
    assert _accel.BACKEND == prev
