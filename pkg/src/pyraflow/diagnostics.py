"""Flow metrics and gradient-dynamics statistics.

Fl-all follows the KITTI convention: a pixel is an outlier when its
endpoint error exceeds both 3 px and 5% of the ground-truth magnitude.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import as_flow, check_same_grid
from .errors import InputError

DEFAULT_BIN_EDGES = (0.0, 5.0, 10.0, 20.0, 40.0, 80.0, math.inf)
TRACE_HEADER = ("iter", "ncc", "beta_eff", "sigma2")
HISTOGRAM_HEADER = ("bin_lo", "bin_hi", "count", "mean_epe")


@dataclass
class MetricReport:
    epe: float
    fl_all: float
    n_valid: int
    histogram: list = field(default_factory=list)


@dataclass
class HistogramBin:
    lo: float
    hi: float
    count: int
    mean_epe: float = None  # None for empty bins


def _errors(pred, gt, valid):
    pred = as_flow(pred, "pred")
    gt = as_flow(gt, "gt")
    check_same_grid(pred, gt, names=("pred", "gt"))
    if valid is None:
        valid = np.ones(gt.shape[:2], dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != gt.shape[:2]:
        raise InputError("validity mask must match the flow grid")
    err = np.linalg.norm(pred - gt, axis=-1)
    return err[valid], np.linalg.norm(gt, axis=-1)[valid]


def epe(pred, gt, valid=None):
    err, _ = _errors(pred, gt, valid)
    if err.size == 0:
        raise InputError("no valid pixels")
    return float(err.mean())


def fl_all(pred, gt, valid=None):
    err, mag = _errors(pred, gt, valid)
    if err.size == 0:
        raise InputError("no valid pixels")
    return float(((err > 3.0) & (err > 0.05 * mag)).mean())


def error_histogram(pred, gt, valid=None, bin_edges=DEFAULT_BIN_EDGES):
    """Mean endpoint error per bin of ground-truth magnitude (bins are ``[lo, hi)``)."""
    edges = [float(e) for e in bin_edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise InputError("bin edges must be strictly increasing with at least two entries")
    err, mag = _errors(pred, gt, valid)
    bins = []
    for lo, hi in zip(edges, edges[1:]):
        sel = (mag >= lo) & (mag < hi)
        n = int(sel.sum())
        bins.append(HistogramBin(lo, hi, n, float(err[sel].mean()) if n else None))
    return bins


def evaluate(pred, gt, valid=None, bin_edges=DEFAULT_BIN_EDGES):
    err, _ = _errors(pred, gt, valid)
    return MetricReport(epe(pred, gt, valid), fl_all(pred, gt, valid), int(err.size),
                        error_histogram(pred, gt, valid, bin_edges))


class WelfordState:
    """Streaming per-element mean and variance (Welford's update).

    ``merge`` combines two states with the pairwise formula of Chan et al.,
    so partial streams can be accumulated separately.
    """

    def __init__(self, shape=None):
        self.count = 0
        self.mean = None if shape is None else np.zeros(shape)
        self.m2 = None if shape is None else np.zeros(shape)

    def update(self, sample):
        x = np.asarray(sample, dtype=np.float64).ravel()
        if self.mean is None:
            self.mean = np.zeros_like(x)
            self.m2 = np.zeros_like(x)
        elif x.shape != self.mean.shape:
            raise InputError(f"sample has {x.size} elements, state tracks {self.mean.size}")
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)
        return self

    def merge(self, other):
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean.copy(), other.m2.copy()
            return self
        n = self.count + other.count
        d = other.mean - self.mean
        self.mean = self.mean + d * (other.count / n)
        self.m2 = self.m2 + other.m2 + d ** 2 * (self.count * other.count / n)
        self.count = n
        return self

    def variance(self):
        if self.count < 2:
            raise InputError("variance needs at least two samples")
        return self.m2 / (self.count - 1)

    def mean_variance(self):
        return float(self.variance().mean())


def welford_update(state, sample):
    return state.update(sample)


def welford_variance(state):
    return state.variance()


def mean_variance(state):
    return state.mean_variance()


def ncc(a, b):
    """Zero-mean normalised cross-correlation; 0 when either input is constant."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise InputError("ncc inputs must have the same number of elements")
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def beta_eff(grad1, grad2, theta1, theta2):
    """Gradient change over parameter change, ``|g1 - g2| / |t1 - t2|``."""
    dg = np.asarray(grad1, dtype=np.float64).ravel() - np.asarray(grad2, dtype=np.float64).ravel()
    dt = np.asarray(theta1, dtype=np.float64).ravel() - np.asarray(theta2, dtype=np.float64).ravel()
    step = np.linalg.norm(dt)
    if step == 0.0:
        raise InputError("beta_eff is undefined for identical parameter vectors")
    return float(np.linalg.norm(dg) / step)


def moving_average(values, window):
    """Trailing mean over up to ``window`` finite values (NaNs are skipped)."""
    if window < 1:
        raise InputError("window must be >= 1")
    out = []
    for i in range(len(values)):
        chunk = [v for v in values[max(0, i - window + 1):i + 1] if v is not None and math.isfinite(v)]
        out.append(sum(chunk) / len(chunk) if chunk else math.nan)
    return out


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if not isinstance(x, int) else str(x)


def write_trace_csv(path_or_file, rows):
    """Write ``(iter, ncc, beta_eff, sigma2)`` rows; missing values are left empty."""
    _write_csv(path_or_file, TRACE_HEADER, rows)


def write_histogram_csv(path_or_file, bins):
    _write_csv(path_or_file, HISTOGRAM_HEADER,
               [(b.lo, b.hi, b.count, b.mean_epe) for b in bins])


def _write_csv(path_or_file, header, rows):
    if hasattr(path_or_file, "write"):
        _emit(path_or_file, header, rows)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _emit(fh, header, rows)


def _emit(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
