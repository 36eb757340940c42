"""Pseudo ground-truth from a teacher's predictions.

A teacher pixel is kept only if it passes every filter: forward-backward
occlusion consistency, photometric SAD, confidence, and distance to sparse
ground truth where that exists.  The surviving mask is then eroded so that
isolated survivors and thin patches are dropped.  Filters are evaluated in
the image-1 frame; swap the arguments for the image-2 pseudo-GT.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .core import FlowField, as_flow, as_image, bilinear_sample, check_same_grid, pixel_grid
from .errors import InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistillConfig:
    occl_abs: float = 0.05
    occl_rel: float = 0.01
    conf_min: float = 0.95
    gt_dist_max: float = 3.0
    photo_thresh: float = 0.25
    erosion_radius: int = 2

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise InputError(f"{name} must be non-negative, got {value!r}")
        if int(self.erosion_radius) != self.erosion_radius:
            raise InputError("erosion_radius must be an integer")


@dataclass
class PseudoGroundTruth:
    flow: np.ndarray
    valid: np.ndarray

    def as_flow_field(self):
        return FlowField(self.flow, self.valid)


def _sampled_backward(F12, F21):
    return bilinear_sample(F21, pixel_grid(*F12.shape[:2]) + F12)


def occlusion_consistency(F12, F21, cfg=DistillConfig()):
    """True where the forward-backward check marks the pixel as not occluded."""
    F12 = as_flow(F12, "F12")
    F21 = as_flow(F21, "F21")
    check_same_grid(F12, F21, names=("F12", "F21"))
    back = _sampled_backward(F12, F21)
    lhs = ((F12 + back) ** 2).sum(-1) - cfg.occl_abs
    rhs = cfg.occl_rel * ((F12 ** 2).sum(-1) + (back ** 2).sum(-1))
    return lhs < rhs


def photometric_error(I1, I2, F12):
    I1 = as_image(I1, "I1")
    I2 = as_image(I2, "I2")
    F12 = as_flow(F12, "F12")
    check_same_grid(I1, I2, F12, names=("I1", "I2", "F12"))
    return np.abs(I1 - bilinear_sample(I2, pixel_grid(*F12.shape[:2]) + F12)).mean(-1)


def photometric_filter(I1, I2, F12, cfg=DistillConfig()):
    return photometric_error(I1, I2, F12) <= cfg.photo_thresh


def confidence_filter(conf, cfg=DistillConfig()):
    conf = np.asarray(conf, dtype=np.float64)
    return conf >= cfg.conf_min


def gt_distance_filter(teacher_flow, gt_flow, gt_valid=None, cfg=DistillConfig()):
    """Prune teacher pixels far from ground truth; pixels without GT pass."""
    t = as_flow(teacher_flow, "teacher_flow")
    g = np.asarray(gt_flow, dtype=np.float64)
    if g.shape != t.shape:
        raise InputError("teacher and ground-truth flows must have the same shape")
    if gt_valid is None:
        gt_valid = np.isfinite(g).all(-1)
    gt_valid = np.asarray(gt_valid, dtype=bool)
    dist = np.linalg.norm(t - np.where(gt_valid[..., None], g, 0.0), axis=-1)
    return ~gt_valid | (dist <= cfg.gt_dist_max)


def erosion_prune(mask, cfg=DistillConfig()):
    """Binary erosion with a (2r+1)^2 square; outside the image counts as False."""
    mask = np.asarray(mask, dtype=bool)
    r = int(cfg.erosion_radius)
    if r == 0:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=np.ones((2 * r + 1, 2 * r + 1), bool),
                                  border_value=0)


def filter_masks(teacher_flow, F21, I1, I2, conf, gt_flow=None, gt_valid=None, cfg=DistillConfig()):
    """Every individual filter's pass mask, keyed by filter name."""
    masks = {
        "occlusion": occlusion_consistency(teacher_flow, F21, cfg),
        "photometric": photometric_filter(I1, I2, teacher_flow, cfg),
        "confidence": confidence_filter(conf, cfg),
    }
    if gt_flow is not None:
        masks["gt_distance"] = gt_distance_filter(teacher_flow, gt_flow, gt_valid, cfg)
    return masks


def make_pseudo_gt(teacher_flow, F21, I1, I2, conf, gt_flow=None, gt_valid=None, cfg=DistillConfig()):
    masks = filter_masks(teacher_flow, F21, I1, I2, conf, gt_flow, gt_valid, cfg)
    combined = np.logical_and.reduce(list(masks.values()))
    valid = erosion_prune(combined, cfg)
    logger.info("pseudo-GT: %s, kept %d/%d after erosion (config %s)",
                ", ".join(f"{k}={int(v.sum())}" for k, v in masks.items()),
                int(valid.sum()), valid.size, cfg)
    return PseudoGroundTruth(np.asarray(teacher_flow, dtype=np.float64).copy(), valid)
