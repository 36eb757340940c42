"""Finite-difference checks of every analytic derivative in the package.

Each suite draws random instances whose sample positions stay inside the
image and away from integer coordinates, where bilinear interpolation is
smooth, and compares the analytic gradient with central differences.  The
error of one instance is ``|analytic - numeric| / max(|numeric|, 1e-12)``
taken over the whole gradient vector.

``perturb`` names a suite whose analytic gradient is deliberately scaled by
``1 + 1e-2``; the suite must then fail, which is how the harness itself is
smoke-tested.
"""
import time
from dataclasses import dataclass

import numpy as np

from .core import bilinear_sample, bilinear_sample_grad, upsample_flow, upsample_flow_adjoint
from .cost_volume import MODES, cost_volume, cv_grad_wrt_flow, warp_padded, window_offsets
from .toy import photometric_loss_and_grad

DEFAULT_TOL = 1e-4
FD_STEP = 1e-6
PERTURBATION = 1e-2


@dataclass
class SuiteResult:
    name: str
    instances: int
    max_error: float
    tol: float
    seconds: float

    @property
    def passed(self):
        return bool(self.max_error <= self.tol)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: {self.instances} instances, "
                f"max rel err {self.max_error:.2e} (tol {self.tol:.0e}), {self.seconds:.2f}s")


def _rel_err(analytic, numeric):
    a, n = np.ravel(analytic), np.ravel(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(n), 1e-12))


def _interior(rng, shape, lo, hi):
    # Integer part uniform in [lo, hi), fractional part kept off the cell edges.
    return rng.integers(lo, hi, size=shape) + rng.uniform(0.1, 0.9, size=shape)


def _central_diff(f, x, h=FD_STEP):
    x = np.array(x, dtype=np.float64)
    g = np.empty(x.size)
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g.reshape(x.shape)


def check_bilinear(rng, trials, perturb=False):
    """Derivatives of bilinear sampling with respect to the sample position."""
    worst = 0.0
    scale = 1.0 + PERTURBATION if perturb else 1.0
    for _ in range(trials):
        H, W, C = rng.integers(3, 9), rng.integers(3, 9), rng.integers(1, 4)
        img = rng.normal(size=(H, W, C))
        x = np.array([_interior(rng, (), 0, W - 1), _interior(rng, (), 0, H - 1)])
        gu, gv = bilinear_sample_grad(img, x)
        analytic = scale * np.stack([gu, gv], axis=-1)
        numeric = np.stack([
            _central_diff(lambda p, c=c: bilinear_sample(img, p)[c], x) for c in range(C)
        ])
        worst = max(worst, _rel_err(analytic, numeric))
    return worst


def _cv_instance(rng, delta):
    H, W, C = 5, 5, int(rng.integers(1, 4))
    I1 = rng.normal(size=(H, W, C))
    I2 = rng.normal(size=(H, W, C))
    # Every probe target x + d + F(x) must stay interior for every |d| <= delta,
    # including the border-extended canvas used by the warp mode.
    target = np.stack([_interior(rng, (H, W), delta, W - 1 - delta),
                       _interior(rng, (H, W), delta, H - 1 - delta)], axis=-1)
    gy, gx = np.mgrid[0:H, 0:W]
    flow = target - np.stack([gx, gy], axis=-1)
    return I1, I2, flow


def _min_abs_residual(I1, I2, flow, delta, mode):
    # Smallest |I1 - probe| over all probes; SAD has a kink where it is 0.
    H, W = I1.shape[:2]
    gy, gx = np.mgrid[0:H, 0:W]
    grid = np.stack([gx, gy], axis=-1)
    canvas = warp_padded(I2, flow, delta) if mode.startswith("warp") else None
    out = np.inf
    for du, dv in window_offsets(delta):
        if canvas is None:
            probe = bilinear_sample(I2, grid + flow + (du, dv))
        else:
            probe = canvas[delta + dv:delta + dv + H, delta + du:delta + du + W]
        out = min(out, float(np.abs(I1 - probe).min()))
    return out


def check_cost_volume(rng, trials, perturb=False, delta=1):
    """Flow gradient of ``sum(upstream * V)`` for every cost volume mode.

    SAD instances whose residual comes within 1e-3 of the kink at zero are
    redrawn.
    """
    worst = 0.0
    scale = 1.0 + PERTURBATION if perturb else 1.0
    for t in range(trials):
        mode = MODES[t % len(MODES)]
        I1, I2, flow = _cv_instance(rng, delta)
        while mode.endswith("sad") and _min_abs_residual(I1, I2, flow, delta, mode) < 1e-3:
            I1, I2, flow = _cv_instance(rng, delta)
        up = rng.normal(size=I1.shape[:2] + ((2 * delta + 1) ** 2,))
        analytic = scale * cv_grad_wrt_flow(mode, I1, I2, flow, delta, up)
        numeric = _central_diff(lambda f: float((up * cost_volume(I1, I2, f, delta, mode).data).sum()),
                                flow)
        worst = max(worst, _rel_err(analytic, numeric))
    return worst


def check_upsample_adjoint(rng, trials, perturb=False):
    """``<up(a), b> == <a, up^T(b)>`` for random shapes, odd sizes included."""
    worst = 0.0
    scale = 1.0 + PERTURBATION if perturb else 1.0
    for _ in range(trials):
        h, w = rng.integers(1, 7, size=2)
        H, W = 2 * h - rng.integers(0, 2), 2 * w - rng.integers(0, 2)
        a = rng.normal(size=(h, w, 2))
        b = rng.normal(size=(H, W, 2))
        lhs = float((upsample_flow(a, (H, W)) * b).sum())
        rhs = float((a * scale * upsample_flow_adjoint(b, (h, w))).sum())
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-12))
    return worst


def check_descent(rng, trials, perturb=False, eps=0.05):
    """Gradient of the robust photometric loss used by the two-level descent."""
    worst = 0.0
    scale = 1.0 + PERTURBATION if perturb else 1.0
    for _ in range(trials):
        I1, I2, flow = _cv_instance(rng, 0)
        _, g = photometric_loss_and_grad(I1, I2, flow, eps)
        numeric = _central_diff(lambda f: photometric_loss_and_grad(I1, I2, f, eps)[0], flow)
        worst = max(worst, _rel_err(scale * g, numeric))
    return worst


SUITES = {
    "bilinear": check_bilinear,
    "cost-volume": check_cost_volume,
    "upsample-adjoint": check_upsample_adjoint,
    "descent": check_descent,
}


def run_suites(trials=200, seed=0, tol=DEFAULT_TOL, perturb=None, names=None):
    """Run the named suites (all by default); returns a list of :class:`SuiteResult`."""
    names = list(SUITES) if names is None else list(names)
    unknown = [n for n in names + ([perturb] if perturb else []) if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown gradient suite(s) {unknown}; expected {sorted(SUITES)}")
    results = []
    for name in names:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        err = SUITES[name](rng, trials, perturb=(name == perturb))
        results.append(SuiteResult(name, trials, err, tol, time.perf_counter() - t0))
    return results
