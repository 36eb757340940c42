"""Hand-computed flow cues relating the forward and backward flows.

All cues are expressed in the frame of the first argument's image.  For a
forward flow ``F12`` (frame of image 1) and backward flow ``F21`` (frame of
image 2):

* forward-backward warp: ``-F21`` read at ``x + F12(x)``;
* reverse flow: ``-F21`` forward-splatted onto image 1 with bilinear hat
  weights and normalised by the splatted weight;
* uniqueness density: that splatted weight, >1 where several pixels land
  (occlusion) and <1 where few do (dis-occlusion);
* out-of-image: whether ``x + F12(x)`` leaves image 2.
"""
from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import as_flow, bilinear_sample, check_same_grid, pixel_grid


@dataclass
class CueStack:
    fb_flow: np.ndarray
    rev_flow: np.ndarray
    density: np.ndarray
    oob: np.ndarray

    def as_features(self, own_flow=None):
        """Channel stack ``[own_flow?, fb(2), rev(2), density, oob]``."""
        parts = [] if own_flow is None else [np.asarray(own_flow, dtype=np.float64)]
        parts += [self.fb_flow, self.rev_flow, self.density[..., None],
                  self.oob[..., None].astype(np.float64)]
        return np.concatenate(parts, axis=-1)


def fwd_bwd_warp(F12, F21):
    F12 = as_flow(F12, "F12")
    F21 = as_flow(F21, "F21")
    check_same_grid(F12, F21, names=("F12", "F21"))
    return -bilinear_sample(F21, pixel_grid(*F12.shape[:2]) + F12)


def _splat(F21, valid):
    F21 = as_flow(F21, "F21")
    if valid is None:
        valid = np.ones(F21.shape[:2], dtype=np.uint8)
    else:
        valid = np.ascontiguousarray(valid, dtype=np.uint8)
        check_same_grid(F21, valid[..., None], names=("F21", "valid"))
    return _backend.kernels.splat(F21, valid)


def reverse_flow(F21, valid=None):
    """Reverse-flow estimate and its density from the opposite flow alone.

    Source pixels with ``valid`` False are skipped; splat targets outside
    the image are dropped.  Pixels that receive no weight get flow 0.
    Returns ``(flow, density)``.
    """
    acc, density = _splat(F21, valid)
    flow = np.zeros_like(acc)
    hit = density > 0
    flow[hit] = -acc[hit] / density[hit][:, None]
    return flow, density


def uniqueness_density(F21, valid=None):
    return _splat(F21, valid)[1]


def out_of_image(F12):
    F12 = as_flow(F12, "F12")
    H, W = F12.shape[:2]
    p = pixel_grid(H, W) + F12
    return (p[..., 0] < 0) | (p[..., 0] > W - 1) | (p[..., 1] < 0) | (p[..., 1] > H - 1)


def cue_stack(F12, F21):
    """Cues for the image-1 branch."""
    rev, density = reverse_flow(F21)
    return CueStack(fwd_bwd_warp(F12, F21), rev, density, out_of_image(F12))


def build_cue_stack(F12, F21):
    """Cue stacks for both branches: ``(stack_1to2, stack_2to1)``."""
    return cue_stack(F12, F21), cue_stack(F21, F12)
