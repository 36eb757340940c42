import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pyraflow.cues import (build_cue_stack, cue_stack, fwd_bwd_warp, out_of_image, reverse_flow,
                           uniqueness_density)

from .test_core import oracle_sample


def hat(a, b):
    return max(0.0, 1 - abs(a[0] - b[0])) * max(0.0, 1 - abs(a[1] - b[1]))


def oracle_reverse(F21, valid=None):
    """Double sum over every (target, source) pair."""
    H, W = F21.shape[:2]
    flow = np.zeros((H, W, 2))
    density = np.zeros((H, W))
    for ty in range(H):
        for tx in range(W):
            acc = np.zeros(2)
            for sy in range(H):
                for sx in range(W):
                    if valid is not None and not valid[sy, sx]:
                        continue
                    w = hat((tx, ty), (sx + F21[sy, sx, 0], sy + F21[sy, sx, 1]))
                    acc -= w * F21[sy, sx]
                    density[ty, tx] += w
            if density[ty, tx] > 0:
                flow[ty, tx] = acc / density[ty, tx]
    return flow, density


def translation(H, W, t):
    return np.broadcast_to(np.array(t, float), (H, W, 2)).copy()


class TestForwardBackwardWarp:
    def test_zero(self):
        np.testing.assert_array_equal(fwd_bwd_warp(np.zeros((3, 4, 2)), np.zeros((3, 4, 2))), 0.0)

    def test_rigid_translation(self):
        fb = fwd_bwd_warp(translation(4, 8, (2, 0)), translation(4, 8, (-2, 0)))
        np.testing.assert_array_equal(fb[:, :6], translation(4, 6, (2, 0)))

    def test_random_against_sampling(self, backend, rng):
        F12 = rng.uniform(-2, 2, size=(5, 6, 2))
        F21 = rng.normal(size=(5, 6, 2))
        got = fwd_bwd_warp(F12, F21)
        for y in range(5):
            for x in range(6):
                want = -oracle_sample(F21, x + F12[y, x, 0], y + F12[y, x, 1])
                np.testing.assert_allclose(got[y, x], want, atol=1e-12)


class TestReverseFlow:
    def test_zero_flow(self, backend):
        flow, density = reverse_flow(np.zeros((4, 5, 2)))
        np.testing.assert_array_equal(flow, 0.0)
        np.testing.assert_array_equal(density, 1.0)

    def test_single_row_half_pixel(self, backend):
        F21 = np.full((1, 5, 2), 100.0)
        F21[0, 2] = (0.5, 0.0)
        valid = np.zeros((1, 5), bool)
        valid[0, 2] = True
        flow, density = reverse_flow(F21, valid)
        np.testing.assert_allclose(density[0], [0, 0, 0.5, 0.5, 0])
        np.testing.assert_allclose(flow[0, 2:4], [[-0.5, 0], [-0.5, 0]])
        np.testing.assert_array_equal(flow[0, [0, 1, 4]], 0.0)

    def test_random_against_double_sum(self, backend, rng):
        F21 = rng.uniform(-2, 2, size=(6, 6, 2))
        flow, density = reverse_flow(F21)
        want_flow, want_density = oracle_reverse(F21)
        np.testing.assert_allclose(density, want_density, atol=1e-12)
        np.testing.assert_allclose(flow, want_flow, atol=1e-12)

    def test_masked_sources_against_double_sum(self, backend, rng):
        F21 = rng.uniform(-2, 2, size=(5, 6, 2))
        valid = rng.uniform(size=(5, 6)) > 0.3
        flow, density = reverse_flow(F21, valid)
        want_flow, want_density = oracle_reverse(F21, valid)
        np.testing.assert_allclose(density, want_density, atol=1e-12)
        np.testing.assert_allclose(flow, want_flow, atol=1e-12)

    def test_density_matches_normaliser(self, rng):
        F21 = rng.uniform(-2, 2, size=(5, 5, 2))
        np.testing.assert_array_equal(uniqueness_density(F21), reverse_flow(F21)[1])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_mass_conserved_inside_border(self, seed):
        r = np.random.default_rng(seed)
        H, W = 8, 9
        # Targets stay at least one pixel inside, so no splat weight is lost.
        target = np.stack([r.uniform(1, W - 2, (H, W)), r.uniform(1, H - 2, (H, W))], axis=-1)
        ys, xs = np.mgrid[0:H, 0:W]
        F21 = target - np.stack([xs, ys], axis=-1)
        assert uniqueness_density(F21).sum() == pytest.approx(H * W, rel=1e-12)


class TestDensity:
    def test_two_sources_on_one_pixel(self):
        F21 = np.zeros((1, 4, 2))
        F21[0, 1] = (1.0, 0.0)
        np.testing.assert_array_equal(uniqueness_density(F21)[0], [1, 0, 2, 1])

    def test_translation_vacates_strip(self):
        d = uniqueness_density(translation(3, 7, (-2, 0)))
        np.testing.assert_array_equal(d[:, :5], 1.0)
        np.testing.assert_array_equal(d[:, 5:], 0.0)


class TestOutOfImage:
    def test_zero(self):
        assert not out_of_image(np.zeros((3, 3, 2))).any()

    def test_corner(self):
        F = np.zeros((3, 3, 2))
        F[0, 0] = (-1, 0)
        assert out_of_image(F)[0, 0] and out_of_image(F).sum() == 1

    def test_random_against_bounds(self, rng):
        F = rng.uniform(-4, 4, size=(5, 6, 2))
        got = out_of_image(F)
        for y in range(5):
            for x in range(6):
                u, v = x + F[y, x, 0], y + F[y, x, 1]
                assert got[y, x] == (not (0 <= u <= 5 and 0 <= v <= 4))


class TestCueStack:
    def test_zero_flows(self):
        s = cue_stack(np.zeros((3, 3, 2)), np.zeros((3, 3, 2)))
        np.testing.assert_array_equal(s.as_features(), np.tile([0, 0, 0, 0, 1, 0], (3, 3, 1)))

    def test_rigid_translation(self):
        H, W, t = 4, 8, 2
        s = cue_stack(translation(H, W, (t, 0)), translation(H, W, (-t, 0)))
        overlap = slice(0, W - t)
        np.testing.assert_array_equal(s.fb_flow[:, overlap], translation(H, W - t, (t, 0)))
        np.testing.assert_array_equal(s.rev_flow[:, overlap], translation(H, W - t, (t, 0)))
        np.testing.assert_array_equal(s.density[:, overlap], 1.0)
        np.testing.assert_array_equal(s.oob[:, overlap], False)
        np.testing.assert_array_equal(s.oob[:, W - t:], True)

    def test_composition(self, rng):
        F12, F21 = rng.uniform(-2, 2, size=(2, 5, 5, 2))
        s = cue_stack(F12, F21)
        np.testing.assert_array_equal(s.fb_flow, fwd_bwd_warp(F12, F21))
        np.testing.assert_array_equal(s.rev_flow, reverse_flow(F21)[0])
        np.testing.assert_array_equal(s.density, uniqueness_density(F21))
        np.testing.assert_array_equal(s.oob, out_of_image(F12))
        own = s.as_features(F12)
        assert own.shape == (5, 5, 8)

    def test_symmetry(self, rng):
        F12, F21 = rng.uniform(-2, 2, size=(2, 5, 5, 2))
        a1, a2 = build_cue_stack(F12, F21)
        b1, b2 = build_cue_stack(F21, F12)
        np.testing.assert_array_equal(a1.as_features(), b2.as_features())
        np.testing.assert_array_equal(a2.as_features(), b1.as_features())
