"""Per-pixel flow losses, loss max-pooling and loss combination."""
import math
from dataclasses import dataclass

import numpy as np

from .core import as_flow, check_same_grid
from .errors import InputError

DEFAULT_KEEP_FRACTION = 0.75
DEFAULT_DISTILL_ALPHA = 0.9


@dataclass
class PixelLossMap:
    loss: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.loss = np.asarray(self.loss, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.loss.shape != self.valid.shape:
            raise InputError("loss and validity grids must have the same shape")
        if not np.all(np.isfinite(self.loss)):
            raise InputError("per-pixel losses must be finite")
        self.loss = np.where(self.valid, self.loss, 0.0)

    @property
    def n_valid(self):
        return int(self.valid.sum())


@dataclass(frozen=True)
class LmpConfig:
    keep_fraction: float = DEFAULT_KEEP_FRACTION

    def __post_init__(self):
        if not 0.0 < self.keep_fraction <= 1.0:
            raise InputError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")


@dataclass(frozen=True)
class LossCombineConfig:
    distill_alpha: float = DEFAULT_DISTILL_ALPHA

    def __post_init__(self):
        if not 0.0 <= self.distill_alpha <= 1.0:
            raise InputError(f"distill_alpha must be in [0, 1], got {self.distill_alpha}")


def per_pixel_epe_loss(pred, gt, valid=None):
    """L2 endpoint error per pixel, zero where ``valid`` is False."""
    pred = as_flow(pred, "pred")
    gt = as_flow(gt, "gt")
    check_same_grid(pred, gt, names=("pred", "gt"))
    if valid is None:
        valid = np.ones(gt.shape[:2], dtype=bool)
    return PixelLossMap(np.linalg.norm(pred - gt, axis=-1), valid)


def lmp_weights(losses, cfg=LmpConfig()):
    """Optimal weights of the loss max-pooling problem.

    Maximises ``sum(w * loss)`` subject to ``|w|_1 <= 1`` and
    ``|w|_inf <= 1 / (keep_fraction * N)`` over the ``N`` valid pixels.  The
    top ``floor(keep_fraction * N)`` losses get the cap, the next one gets
    whatever mass is left.  Ties are broken by row-major pixel index.
    """
    n = losses.n_valid
    if n == 0:
        raise InputError("loss max-pooling needs at least one valid pixel")
    flat_loss = losses.loss.ravel()
    idx = np.flatnonzero(losses.valid.ravel())
    # lexsort: last key is primary -> descending loss, then ascending index.
    order = idx[np.lexsort((idx, -flat_loss[idx]))]
    budget = cfg.keep_fraction * n
    cap = 1.0 / budget
    m = min(int(math.floor(budget)), n)
    w = np.zeros(flat_loss.shape)
    w[order[:m]] = cap
    if m < n:
        w[order[m]] = min(max(1.0 - m * cap, 0.0), cap)
    return w.reshape(losses.loss.shape)


def lmp_loss(losses, cfg=LmpConfig()):
    return float((lmp_weights(losses, cfg) * losses.loss).sum())


def mean_loss(losses):
    if losses.n_valid == 0:
        raise InputError("mean loss needs at least one valid pixel")
    return float(losses.loss.sum() / losses.n_valid)


def out_of_range_mask(gt_residual, delta):
    """True where both residual components are within the search range."""
    r = as_flow(gt_residual, "gt_residual")
    if delta < 0:
        raise InputError("search range must be non-negative")
    return (np.abs(r[..., 0]) <= delta) & (np.abs(r[..., 1]) <= delta)


def sparse_rescale(losses):
    """Scale valid losses by ``N_total / N_valid`` so sparse maps count fully."""
    n = losses.n_valid
    if n == 0:
        return PixelLossMap(np.zeros_like(losses.loss), losses.valid)
    return PixelLossMap(losses.loss * (losses.loss.size / n), losses.valid)


def combine_losses(supervised, distill, cfg=LossCombineConfig()):
    a = cfg.distill_alpha
    return a * supervised + (1.0 - a) * distill


def supervised_loss(pred, gt, gt_valid, gt_residual=None, delta=None, lmp=LmpConfig()):
    """Supervised term: masked, then max-pooled over the valid pixels.

    ``gt_residual``/``delta`` enable the out-of-range mask; pixels whose
    residual cannot be reached by the current search window are dropped.
    The pooling cap is ``1 / (keep_fraction * N_valid)``, so sparse ground
    truth already counts at full strength and no extra rescale is applied.
    """
    valid = np.asarray(gt_valid, dtype=bool)
    if gt_residual is not None:
        valid = valid & out_of_range_mask(gt_residual, delta)
    return lmp_loss(per_pixel_epe_loss(pred, gt, valid), lmp)


def distillation_loss(pred, pseudo_gt):
    """Distillation term: grid mean of the sparsity-rescaled losses.

    Never max-pooled: pseudo labels keep residual noise that pooling would
    amplify.
    """
    losses = sparse_rescale(per_pixel_epe_loss(pred, pseudo_gt.flow, pseudo_gt.valid))
    return float(losses.loss.mean())


def total_loss(pred, gt, gt_valid, pseudo_gt=None, lmp=LmpConfig(), combine=LossCombineConfig(),
               gt_residual=None, delta=None):
    sup = supervised_loss(pred, gt, gt_valid, gt_residual, delta, lmp)
    if pseudo_gt is None:
        return sup
    return combine_losses(sup, distillation_loss(pred, pseudo_gt), combine)
