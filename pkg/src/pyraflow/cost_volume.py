"""Warping- and sampling-based cost volumes and their flow adjoints.

A cost volume holds one score per pixel and per integer offset in the
square window ``[-delta, delta]^2``.  Offsets are stored offset-major with
``dv`` outer and ``du`` inner: index ``k = (dv + delta) * (2*delta + 1) + (du + delta)``.

Two ways of conditioning on the coarse flow ``F`` are provided:

``warp``
    ``I2`` is first warped with ``F`` and the warped image is probed at
    ``x + d``, i.e. ``I2(x + d + F(x + d))``.  The warped image is
    materialised on a canvas padded by ``delta`` on each side, with ``F``
    border-extended, so that probes outside the image follow the same
    clamp rule as sampling.
``sample``
    ``I2`` is read directly at ``x + d + F(x)``.

Scores are channel means: ``corr`` is the dot product divided by C, ``sad``
the L1 distance divided by C.  ``corr`` is a similarity (take the argmax),
``sad`` a cost (take the argmin); polarity lives in :attr:`CostVolume.mode`.
"""
from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import as_flow, as_image, check_same_grid, pixel_grid
from .errors import InputError

MODES = ("warp-corr", "sample-corr", "sample-sad", "warp-sad")
DEFAULT_DELTA = 4
EXTENDED_DELTA = 8


def _parse_mode(mode):
    if mode not in MODES:
        raise InputError(f"unknown cost volume mode {mode!r}; expected one of {MODES}")
    sampling, distance = mode.split("-")
    return sampling, distance


def _check_delta(delta):
    if int(delta) != delta or delta < 0:
        raise InputError(f"search range must be a non-negative integer, got {delta!r}")
    return int(delta)


def window_offsets(delta):
    """``(K, 2)`` integer array of ``(du, dv)`` in storage order."""
    r = np.arange(-delta, delta + 1)
    dv, du = np.meshgrid(r, r, indexing="ij")
    return np.stack([du.ravel(), dv.ravel()], axis=-1)


@dataclass
class CostVolume:
    data: np.ndarray
    delta: int
    mode: str

    @property
    def higher_is_better(self):
        return self.mode.endswith("corr")

    def offsets(self):
        return window_offsets(self.delta)

    def best_offset(self):
        """Winner-take-all offset per pixel, shape ``(H, W, 2)``.

        Ties go to the smallest ``|d|``, then to the lowest storage index.
        """
        offs = self.offsets()
        order = np.lexsort((np.arange(len(offs)), (offs ** 2).sum(axis=1)))
        scores = self.data[..., order]
        pick = np.argmax(scores, axis=-1) if self.higher_is_better else np.argmin(scores, axis=-1)
        return offs[order[pick]].astype(np.float64)


def _prepare(I1, I2, flow, delta):
    I1 = as_image(I1, "I1")
    I2 = as_image(I2, "I2")
    flow = as_flow(flow, "coarse_flow")
    check_same_grid(I1, I2, flow, names=("I1", "I2", "coarse_flow"))
    if I1.shape[2] != I2.shape[2]:
        raise InputError(f"I1 and I2 channel counts differ ({I1.shape[2]} vs {I2.shape[2]})")
    return I1, I2, flow, _check_delta(delta)


def _padded_warp_coords(flow, delta):
    # Canvas position p = x + d for every x in the image and |d| <= delta.
    H, W = flow.shape[:2]
    grid = pixel_grid(H + 2 * delta, W + 2 * delta) - delta
    py = np.clip(np.arange(-delta, H + delta), 0, H - 1)
    px = np.clip(np.arange(-delta, W + delta), 0, W - 1)
    return grid + flow[py][:, px], py, px


def warp_padded(I2, flow, delta):
    """``I2`` warped by ``flow`` on a canvas padded by ``delta`` pixels."""
    coords, _, _ = _padded_warp_coords(flow, delta)
    Hp, Wp = coords.shape[:2]
    u = np.ascontiguousarray(coords[..., 0].ravel())
    v = np.ascontiguousarray(coords[..., 1].ravel())
    return _backend.kernels.gather(I2, u, v).reshape(Hp, Wp, -1)


def _shift_scores(I1, canvas, delta, distance):
    H, W, C = I1.shape
    D = 2 * delta + 1
    out = np.empty((H, W, D * D))
    for k, (du, dv) in enumerate(window_offsets(delta)):
        b = canvas[delta + dv:delta + dv + H, delta + du:delta + du + W]
        out[..., k] = (np.abs(I1 - b) if distance == "sad" else I1 * b).sum(axis=-1) / C
    return out


def cost_volume(I1, I2, coarse_flow, delta=DEFAULT_DELTA, mode="sample-corr"):
    sampling, distance = _parse_mode(mode)
    I1, I2, flow, delta = _prepare(I1, I2, coarse_flow, delta)
    if sampling == "sample":
        data = _backend.kernels.sample_volume(I1, I2, flow, delta, distance == "sad")
    else:
        data = _shift_scores(I1, warp_padded(I2, flow, delta), delta, distance)
    return CostVolume(data, delta, mode)


def cv_warp_corr(I1, I2, coarse_flow, delta=DEFAULT_DELTA):
    """Correlate ``I1`` with ``I2`` after warping it by the coarse flow."""
    return cost_volume(I1, I2, coarse_flow, delta, "warp-corr")


def cv_sample_corr(I1, I2, coarse_flow, delta=DEFAULT_DELTA):
    """Correlate ``I1(x)`` with ``I2`` read at ``x + d + F(x)``."""
    return cost_volume(I1, I2, coarse_flow, delta, "sample-corr")


def cv_sample_sad(I1, I2, coarse_flow, delta=DEFAULT_DELTA):
    """Channel-mean absolute difference between ``I1(x)`` and ``I2(x + d + F(x))``."""
    return cost_volume(I1, I2, coarse_flow, delta, "sample-sad")


def probe_in_bounds(coarse_flow, delta, mode="sample-corr"):
    """Boolean ``(H, W, K)``: whether each probe lands inside ``I2`` before clamping."""
    sampling, _ = _parse_mode(mode)
    flow = as_flow(coarse_flow)
    delta = _check_delta(delta)
    H, W = flow.shape[:2]
    offs = window_offsets(delta)
    grid = pixel_grid(H, W)
    if sampling == "sample":
        pos = grid[:, :, None, :] + offs[None, None] + flow[:, :, None, :]
    else:
        coords, _, _ = _padded_warp_coords(flow, delta)
        pos = np.empty((H, W, len(offs), 2))
        for k, (du, dv) in enumerate(offs):
            pos[:, :, k] = coords[delta + dv:delta + dv + H, delta + du:delta + du + W]
    return (pos[..., 0] >= 0) & (pos[..., 0] <= W - 1) & (pos[..., 1] >= 0) & (pos[..., 1] <= H - 1)


def _warp_adjoint(I1, I2, flow, delta, distance, upstream):
    H, W, C = I1.shape
    coords, py, px = _padded_warp_coords(flow, delta)
    Hp, Wp = coords.shape[:2]
    u = np.ascontiguousarray(coords[..., 0].ravel())
    v = np.ascontiguousarray(coords[..., 1].ravel())
    val, gu, gv = _backend.kernels.gather_grad(I2, u, v)
    val, gu, gv = (a.reshape(Hp, Wp, C) for a in (val, gu, gv))
    # Which flow pixel each canvas position read its displacement from.
    owner = (py[:, None] * W + px[None, :])
    out = np.zeros((H * W, 2))
    for k, (du, dv) in enumerate(window_offsets(delta)):
        sl = (slice(delta + dv, delta + dv + H), slice(delta + du, delta + du + W))
        w = -np.sign(I1 - val[sl]) if distance == "sad" else I1
        w = w * upstream[..., k:k + 1] / C
        contrib = np.stack([(w * gu[sl]).sum(-1), (w * gv[sl]).sum(-1)], axis=-1)
        np.add.at(out, owner[sl].ravel(), contrib.reshape(-1, 2))
    return out.reshape(H, W, 2)


def cv_grad_wrt_flow(mode, I1, I2, coarse_flow, delta, upstream, stop_gradient=False):
    """Gradient of ``sum(upstream * V)`` with respect to the coarse flow.

    ``upstream`` has the cost volume's shape ``(H, W, K)``.  With
    ``stop_gradient`` the result is identically zero, which is how the coarse
    flow is detached from a finer level's loss.
    """
    sampling, distance = _parse_mode(mode)
    I1, I2, flow, delta = _prepare(I1, I2, coarse_flow, delta)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    K = (2 * delta + 1) ** 2
    if upstream.shape != I1.shape[:2] + (K,):
        raise InputError(f"upstream must have shape {I1.shape[:2] + (K,)}, got {upstream.shape}")
    if stop_gradient:
        return np.zeros(flow.shape)
    if sampling == "sample":
        return _backend.kernels.sample_volume_adjoint(I1, I2, flow, delta, distance == "sad", upstream)
    return _warp_adjoint(I1, I2, flow, delta, distance, upstream)
