"""Coarse-to-fine optical flow components: sampling cost volumes, loss
max-pooling, flow cues, pseudo ground-truth distillation, diagnostics and a
desk-scale toy solver."""
from ._backend import BACKEND, use_backend
from .core import (FlowField, Pyramid, bilinear_sample, bilinear_sample_grad, build_pyramid,
                   upsample_flow, upsample_flow_adjoint, warp_image)
from .cost_volume import (CostVolume, cost_volume, cv_grad_wrt_flow, cv_sample_corr, cv_sample_sad,
                          cv_warp_corr)
from .cues import CueStack, build_cue_stack, reverse_flow
from .diagnostics import MetricReport, WelfordState, beta_eff, epe, evaluate, fl_all, ncc
from .distill import DistillConfig, PseudoGroundTruth, make_pseudo_gt
from .errors import DivergenceError, FormatError, InputError, PyraflowError
from .losses import LmpConfig, PixelLossMap, lmp_loss, lmp_weights

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "use_backend",
    "FlowField", "Pyramid", "bilinear_sample", "bilinear_sample_grad", "build_pyramid",
    "upsample_flow", "upsample_flow_adjoint", "warp_image",
    "CostVolume", "cost_volume", "cv_grad_wrt_flow", "cv_sample_corr", "cv_sample_sad", "cv_warp_corr",
    "CueStack", "build_cue_stack", "reverse_flow",
    "MetricReport", "WelfordState", "beta_eff", "epe", "evaluate", "fl_all", "ncc",
    "DistillConfig", "PseudoGroundTruth", "make_pseudo_gt",
    "DivergenceError", "FormatError", "InputError", "PyraflowError",
    "LmpConfig", "PixelLossMap", "lmp_loss", "lmp_weights",
]
