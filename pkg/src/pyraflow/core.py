"""Grid types, bilinear sampling with analytic derivatives, warping, pyramids.

Conventions used throughout the package:

* images are float64 arrays of shape ``(H, W, C)``; 2-D input is promoted
  to one channel;
* flows are arrays of shape ``(H, W, 2)`` holding ``(u, v)`` with ``u``
  horizontal (column) and ``v`` vertical (row), in pixels of their level;
* coordinates passed to the samplers are arrays whose last axis is ``(u, v)``;
* sampling outside the image clamps the coordinate to ``[0, W-1] x [0, H-1]``;
* derivatives at exact integer coordinates come from the cell to the right
  (``[floor(x), floor(x)+1)``), except on the last row/column where the
  cell to the left is the only one available; outside the image they are 0.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import InputError


def as_image(img, name="image"):
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise InputError(f"{name} must have shape (H, W) or (H, W, C), got {np.shape(img)}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def as_flow(flow, name="flow"):
    arr = np.asarray(flow, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError(f"{name} must have shape (H, W, 2), got {np.shape(flow)}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_same_grid(*arrays, names=None):
    shapes = [a.shape[:2] for a in arrays]
    if len(set(shapes)) > 1:
        label = ", ".join(names) if names else "inputs"
        raise InputError(f"{label} must share height and width, got {shapes}")


@dataclass
class FlowField:
    """A flow grid plus an optional per-pixel validity mask."""

    data: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or self.data.shape[2] != 2:
            raise InputError(f"flow data must have shape (H, W, 2), got {self.data.shape}")
        if self.valid is not None:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.data.shape[:2]:
                raise InputError("validity mask must match the flow grid")

    @property
    def shape(self):
        return self.data.shape[:2]

    def mask(self):
        """Validity as a boolean grid (all True when no mask is attached)."""
        if self.valid is None:
            return np.ones(self.shape, dtype=bool)
        return self.valid


@dataclass
class Pyramid:
    levels: list
    factor: int = field(default=2)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]


def pixel_grid(height, width):
    """Coordinates of every pixel as an ``(H, W, 2)`` array of ``(u, v)``."""
    gy, gx = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([gx, gy], axis=-1)


def _split_coords(x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (2,):
        raise InputError(f"coordinates need a trailing (u, v) axis, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("sample coordinates must be finite")
    lead = x.shape[:-1]
    flat = x.reshape(-1, 2)
    return lead, np.ascontiguousarray(flat[:, 0]), np.ascontiguousarray(flat[:, 1])


def bilinear_sample(img, x):
    """Sample ``img`` at continuous coordinates ``x`` (last axis ``(u, v)``).

    Returns an array of shape ``x.shape[:-1] + (C,)``.
    """
    img = as_image(img)
    lead, u, v = _split_coords(x)
    out = _backend.kernels.gather(img, u, v)
    return out.reshape(lead + (img.shape[2],))


def bilinear_sample_grad(img, x):
    """Derivatives of :func:`bilinear_sample` with respect to ``u`` and ``v``.

    Piecewise constant per unit cell and discontinuous across integer
    coordinates.  Returns ``(d_du, d_dv)``, each shaped like the samples.
    """
    img = as_image(img)
    lead, u, v = _split_coords(x)
    _, gu, gv = _backend.kernels.gather_grad(img, u, v)
    shape = lead + (img.shape[2],)
    return gu.reshape(shape), gv.reshape(shape)


def warp_image(src, flow):
    """Backward warp: ``out(x) = src(x + flow(x))`` with border clamping.

    No de-duplication is done, so pixels whose source is covered in ``src``
    show whatever covers them (ghosting).
    """
    src = as_image(src, "src")
    flow = as_flow(flow)
    check_same_grid(src, flow, names=("src", "flow"))
    return bilinear_sample(src, pixel_grid(*flow.shape[:2]) + flow)


def downsample_mean(img):
    """2x2 mean pooling; odd trailing rows/columns average what is there."""
    img = as_image(img)
    H, W, C = img.shape
    h, w = -(-H // 2), -(-W // 2)
    pad = np.zeros((2 * h, 2 * w, C))
    cnt = np.zeros((2 * h, 2 * w, 1))
    pad[:H, :W] = img
    cnt[:H, :W] = 1.0
    s = pad.reshape(h, 2, w, 2, C).sum(axis=(1, 3))
    n = cnt.reshape(h, 2, w, 2, 1).sum(axis=(1, 3))
    return s / n


def build_pyramid(img, n_levels):
    """Mean-pooling pyramid; ``levels[0]`` is the input (finest)."""
    if int(n_levels) != n_levels or n_levels < 1:
        raise InputError(f"n_levels must be a positive integer, got {n_levels!r}")
    levels = [as_image(img)]
    for _ in range(int(n_levels) - 1):
        levels.append(downsample_mean(levels[-1]))
    return Pyramid(levels)


def _interp_matrix(n_out, n_in):
    # Fine index i sits at coarse coordinate (i + 0.5) / 2 - 0.5, which keeps
    # pixel centres aligned with the 2x2 pooling used by build_pyramid.
    A = np.zeros((n_out, n_in))
    x = np.clip((np.arange(n_out) + 0.5) / 2.0 - 0.5, 0.0, n_in - 1.0)
    i0 = np.minimum(np.floor(x).astype(int), max(n_in - 2, 0))
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = x - i0
    rows = np.arange(n_out)
    np.add.at(A, (rows, i0), 1.0 - f)
    np.add.at(A, (rows, i1), f)
    return A


def upsample_flow(flow, shape=None):
    """Bilinear 2x upsampling of a flow field, values scaled by 2.

    ``shape`` gives the target ``(H, W)``; by default twice the input size.
    Odd targets are handled by the same coordinate mapping, so a coarse
    level built from an odd-sized image upsamples back onto it.
    """
    flow = as_flow(flow)
    h, w = flow.shape[:2]
    H, W = shape if shape is not None else (2 * h, 2 * w)
    Ar, Ac = _interp_matrix(H, h), _interp_matrix(W, w)
    rows = np.einsum("ij,jkc->ikc", Ar, flow)
    return 2.0 * np.einsum("ikc,lk->ilc", rows, Ac)


def upsample_flow_adjoint(grad, coarse_shape):
    """Transpose of :func:`upsample_flow`: pulls a fine-grid gradient back to the coarse grid."""
    grad = np.asarray(grad, dtype=np.float64)
    H, W = grad.shape[:2]
    h, w = coarse_shape
    Ar, Ac = _interp_matrix(H, h), _interp_matrix(W, w)
    rows = np.einsum("ij,ilc->jlc", Ar, grad)
    return 2.0 * np.einsum("jlc,lk->jkc", rows, Ac)
