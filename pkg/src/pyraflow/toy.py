"""Synthetic layered scenes, a winner-take-all coarse-to-fine estimator and a
two-level gradient-descent flow objective.

Scenes are rendered from up to three layers drawn back to front: a textured
background, a large textured box and a thin line object of constant value
:data:`OBJECT_VALUE`.  Each layer moves
by an integer displacement, so the ground truth is exact: ``gt(x)`` is the
motion of the top layer at ``x`` in the first frame.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import _backend
from .core import FlowField, build_pyramid, pixel_grid, upsample_flow, upsample_flow_adjoint
from .cost_volume import cost_volume, probe_in_bounds
from .diagnostics import WelfordState, beta_eff, ncc
from .errors import DivergenceError, InputError

BG, BOX, OBJECT = 0, 1, 2
OBJECT_VALUE = 1.0  # textures are drawn from [0, 1), so the object is unique


@dataclass(frozen=True)
class SceneSpec:
    """Geometry and motion of a layered scene.

    ``box`` is ``(x0, y0, width, height)`` and ``line`` is ``(x0, y0, length)``
    for a vertical line ``line_width`` pixels wide; either may be None.
    Motions are integer ``(u, v)`` pairs.  ``smooth`` is the Gaussian sigma
    applied to every texture (0 keeps per-pixel noise).
    """

    height: int = 32
    width: int = 64
    channels: int = 3
    v_bg: tuple = (0, 0)
    box: tuple = None
    v_box: tuple = (0, 0)
    line: tuple = None
    line_width: int = 1
    v_obj: tuple = (0, 0)
    smooth: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("v_bg", "v_box", "v_obj"):
            v = getattr(self, name)
            if len(v) != 2 or any(int(c) != c for c in v):
                raise InputError(f"{name} must be an integer (u, v) pair, got {v!r}")
        if self.height < 2 or self.width < 2 or self.channels < 1:
            raise InputError("scene must be at least 2x2 with one channel")
        if not 1 <= self.line_width <= 2:
            raise InputError("line_width must be 1 or 2")


@dataclass
class SyntheticScene:
    """Both frames, exact ground truth and bookkeeping for one rendered scene.

    ``background_flow`` is the ground truth with the object layer removed,
    i.e. the motion of whatever lies beneath it.  ``layers1``/``layers2``
    hold the visible layer id per pixel in each frame.
    """

    I1: np.ndarray
    I2: np.ndarray
    gt_flow: FlowField
    object_mask: np.ndarray
    background_flow: np.ndarray
    layers1: np.ndarray
    layers2: np.ndarray
    spec: SceneSpec

    def visible_in_both(self):
        """Pixels of frame 1 whose layer is still visible at ``x + gt`` in frame 2."""
        H, W = self.layers1.shape
        gt = self.gt_flow.data.astype(int)
        ys, xs = np.mgrid[0:H, 0:W]
        ty, tx = ys + gt[..., 1], xs + gt[..., 0]
        inside = (tx >= 0) & (tx < W) & (ty >= 0) & (ty < H)
        same = np.zeros_like(inside)
        same[inside] = self.layers2[ty[inside], tx[inside]] == self.layers1[inside]
        return same


def _texture(rng, shape, sigma):
    tex = rng.uniform(0.0, 1.0, size=shape)
    if sigma > 0:
        tex = ndimage.gaussian_filter(tex, sigma=(sigma, sigma, 0), mode="reflect")
        tex = (tex - tex.mean()) / (tex.std() + 1e-12)
        tex = np.clip(0.5 + 0.2 * tex, 0.0, 1.0)
    return tex


def _footprint(spec, layer, H, W, shift=(0, 0)):
    """Pixels covered by ``layer`` after moving it by ``shift``."""
    ys, xs = np.mgrid[0:H, 0:W]
    xs, ys = xs - int(shift[0]), ys - int(shift[1])
    if layer == BOX:
        x0, y0, w, h = spec.box
        return (xs >= x0) & (xs < x0 + w) & (ys >= y0) & (ys < y0 + h)
    x0, y0, length = spec.line
    return (xs >= x0) & (xs < x0 + spec.line_width) & (ys >= y0) & (ys < y0 + length)


def gen_scene(spec):
    """Render both frames, ground truth and the object mask for ``spec``."""
    H, W, C = spec.height, spec.width, spec.channels
    rng = np.random.default_rng(spec.seed)
    motions = {BG: spec.v_bg, BOX: spec.v_box, OBJECT: spec.v_obj}
    layers = [BG] + ([BOX] if spec.box is not None else []) + ([OBJECT] if spec.line is not None else [])
    margin = max(abs(int(c)) for v in motions.values() for c in v) + 1
    tex = {L: _texture(rng, (H + 2 * margin, W + 2 * margin, C), spec.smooth) for L in layers}
    if OBJECT in tex:
        tex[OBJECT] = np.full_like(tex[OBJECT], OBJECT_VALUE)

    ys, xs = np.mgrid[0:H, 0:W]
    top1 = np.full((H, W), BG)
    top2 = np.full((H, W), BG)
    for L in layers[1:]:
        top1[_footprint(spec, L, H, W)] = L
        top2[_footprint(spec, L, H, W, motions[L])] = L

    I1 = np.empty((H, W, C))
    I2 = np.empty((H, W, C))
    gt = np.zeros((H, W, 2))
    beneath = np.zeros((H, W, 2))
    for L in layers:
        u, v = (int(c) for c in motions[L])
        m1 = top1 == L
        I1[m1] = tex[L][ys[m1] + margin, xs[m1] + margin]
        gt[m1] = (u, v)
        if L != OBJECT:
            beneath[_footprint(spec, L, H, W) if L != BG else np.ones((H, W), bool)] = (u, v)
        m2 = top2 == L
        I2[m2] = tex[L][ys[m2] - v + margin, xs[m2] - u + margin]
    obj = top1 == OBJECT
    return SyntheticScene(I1, I2, FlowField(gt), obj, beneath, top1, top2, spec)


def small_object_spec(seed, height=32, width=64, smooth=0.0):
    """Box moving right by 4 px with a 1-px line inside it moving left by 3 px.

    The line sits 4 or 5 px inside the box's trailing (left) edge, so its
    frame-2 position lies where the box's motion no longer applies: a warped
    second image has no copy of it within reach.  Box edges are even so the
    2x-pooled level sees the box motion exactly.
    """
    rng = np.random.default_rng(10_000 + seed)
    bw = 2 * int(rng.integers(8, 12))
    bh = 2 * int(rng.integers(7, (height - 4) // 2))
    x0 = 2 * int(rng.integers(3, (width - bw - 8) // 2))
    y0 = 2 * int(rng.integers(1, (height - bh) // 2))
    d = int(rng.integers(4, 6))
    length = int(rng.integers(bh // 2, bh - 3))
    ly = y0 + 1 + int(rng.integers(0, bh - length - 1))
    return SceneSpec(height, width, 3, (0, 0), (x0, y0, bw, bh), (4, 0),
                     (x0 + d, ly, length), 1, (-3, 0), smooth, seed)


def uniform_spec(seed, height=32, width=64, smooth=0.0, motion=None):
    """Whole-image translation; the motion is drawn from the seed unless given."""
    rng = np.random.default_rng(20_000 + seed)
    if motion is None:
        motion = (int(rng.integers(-3, 4)), int(rng.integers(-3, 4)))
    return SceneSpec(height, width, 3, tuple(motion), smooth=smooth, seed=seed)


PRESETS = {"small-object": small_object_spec, "uniform": uniform_spec}


def parse_scene(text, seed=0):
    """Build a :class:`SceneSpec` from ``"preset[,key=value...]"``.

    Tuple-valued keys take ``:``-separated integers, e.g. ``v_bg=2:0``.
    """
    head, *pairs = [p.strip() for p in text.split(",") if p.strip()] or ["small-object"]
    if "=" in head:
        pairs.insert(0, head)
        head = "small-object"
    if head not in PRESETS:
        raise InputError(f"unknown scene preset {head!r}; expected one of {sorted(PRESETS)}")
    overrides = {}
    for pair in pairs:
        key, _, raw = pair.partition("=")
        if key not in SceneSpec.__dataclass_fields__ or not raw:
            raise InputError(f"bad scene field {pair!r}")
        if ":" in raw:
            overrides[key] = tuple(int(x) for x in raw.split(":"))
        elif key == "smooth":
            overrides[key] = float(raw)
        else:
            overrides[key] = int(raw)
    seed = overrides.pop("seed", seed)
    size = {k: overrides.pop(k) for k in ("height", "width", "smooth") if k in overrides}
    return replace(PRESETS[head](seed, **size), **overrides)


@dataclass(frozen=True)
class SolveConfig:
    """Estimator and descent settings.

    ``delta`` is one search range for every level or a sequence indexed by
    level (0 = finest).  ``coarse_median`` applies a 3x3 median to the flow
    estimated at every level but the finest; ``integer_flow`` rounds the
    upsampled flow so every probe lands on the pixel grid.
    """

    n_levels: int = 2
    delta: object = 8
    mode: str = "sample"
    distance: str = "sad"
    stop_gradient: bool = False
    step: float = 0.05
    iterations: int = 200
    coarse_median: bool = True
    integer_flow: bool = True
    mask_out_of_bounds: bool = True
    charbonnier_eps: float = 0.0

    def __post_init__(self):
        if self.n_levels < 1:
            raise InputError("n_levels must be >= 1")
        if self.mode not in ("warp", "sample"):
            raise InputError(f"mode must be 'warp' or 'sample', got {self.mode!r}")
        if self.distance not in ("corr", "sad"):
            raise InputError(f"distance must be 'corr' or 'sad', got {self.distance!r}")
        if self.step <= 0 or self.iterations < 0 or self.charbonnier_eps < 0:
            raise InputError("step must be positive; iterations and eps non-negative")

    def delta_at(self, level):
        if np.ndim(self.delta) == 0:
            return int(self.delta)
        return int(self.delta[level])


@dataclass
class LevelResult:
    level: int
    prior: np.ndarray
    flow: np.ndarray


def coarse_to_fine_wta(scene, cfg=SolveConfig(), return_levels=False):
    """Per-level winner-take-all residual search conditioned on the coarser flow.

    Probes that leave the second image are excluded when
    ``cfg.mask_out_of_bounds`` is set.  Returns the finest-level
    :class:`FlowField`, plus the per-level results when ``return_levels``.
    """
    p1 = build_pyramid(scene.I1, cfg.n_levels)
    p2 = build_pyramid(scene.I2, cfg.n_levels)
    mode = f"{cfg.mode}-{cfg.distance}"
    flow = None
    levels = []
    for lvl in range(cfg.n_levels - 1, -1, -1):
        H, W = p1[lvl].shape[:2]
        prior = np.zeros((H, W, 2)) if flow is None else upsample_flow(flow, (H, W))
        if cfg.integer_flow:
            prior = np.rint(prior)
        delta = cfg.delta_at(lvl)
        cv = cost_volume(p1[lvl], p2[lvl], prior, delta, mode)
        if cfg.mask_out_of_bounds:
            worst = -np.inf if cv.higher_is_better else np.inf
            cv.data = np.where(probe_in_bounds(prior, delta, mode), cv.data, worst)
        flow = prior + cv.best_offset()
        if lvl > 0 and cfg.coarse_median:
            flow = np.stack([ndimage.median_filter(flow[..., c], size=3, mode="nearest")
                             for c in range(2)], axis=-1)
        levels.append(LevelResult(lvl, prior, flow))
    result = FlowField(flow)
    return (result, levels) if return_levels else result


def object_epe(scene, flow):
    data = flow.data if isinstance(flow, FlowField) else np.asarray(flow)
    err = np.linalg.norm(data - scene.gt_flow.data, axis=-1)
    return float(err[scene.object_mask].mean())


def photometric_loss_and_grad(I1, I2, flow, eps):
    """Summed channel-mean robust photometric loss and its flow gradient.

    The per-pixel penalty is ``sqrt(r^2 + eps^2) - eps`` on the residual
    ``r = I1(x) - I2(x + flow(x))``; ``eps = 0`` gives plain absolute
    difference (subgradient ``sign(r)``).
    """
    H, W, C = I1.shape
    x = pixel_grid(H, W) + flow
    u = np.ascontiguousarray(x[..., 0].ravel())
    v = np.ascontiguousarray(x[..., 1].ravel())
    val, gu, gv = _backend.kernels.gather_grad(I2, u, v)
    r = I1 - val.reshape(H, W, C)
    if eps > 0:
        s = np.sqrt(r * r + eps * eps)
        loss = float((s - eps).sum() / C)
        dr = r / s
    else:
        loss = float(np.abs(r).sum() / C)
        dr = np.sign(r)
    g = np.empty((H, W, 2))
    g[..., 0] = -(dr * gu.reshape(H, W, C)).sum(-1) / C
    g[..., 1] = -(dr * gv.reshape(H, W, C)).sum(-1) / C
    return loss, g


@dataclass
class GradTrace:
    iteration: int
    loss0: float
    loss1: float
    grad_level: np.ndarray
    grad_via_flow: np.ndarray
    applied: np.ndarray
    ncc: float
    beta_eff: float = None


@dataclass
class DescentResult:
    trace: list
    coarse_flow: np.ndarray
    residual: np.ndarray
    flow: np.ndarray
    final_loss0: float
    final_loss1: float
    coarse_path: list = None

    @property
    def final_loss(self):
        return self.final_loss0 + self.final_loss1

    def mean_ncc(self):
        return float(np.mean([t.ncc for t in self.trace]))


def _two_levels(scene, cfg):
    if cfg.n_levels < 2:
        raise InputError("two-level descent needs n_levels >= 2")
    p1 = build_pyramid(scene.I1, 2)
    p2 = build_pyramid(scene.I2, 2)
    return p1[1], p2[1], p1[0], p2[0]


def _check_finite(it, *flows):
    if not all(np.isfinite(f).all() for f in flows):
        raise DivergenceError(it, f"flow became non-finite at iteration {it}")


def two_level_descent(scene, cfg=SolveConfig(), keep_snapshots=True, record_path=False):
    """Fixed-step gradient descent on ``L0(F0) + L1(F0, R1)``.

    ``F0`` lives on the 2x-pooled grid and ``R1`` is the fine residual; the
    fine flow is ``upsample(F0) + R1``.  Every iteration records the level
    partial ``dL0/dF0``, the via-flow partial ``dL1/dF0`` and their NCC.  With
    ``cfg.stop_gradient`` the via-flow partial is recorded but not applied.
    ``record_path`` keeps every ``F0`` iterate, initial one included.
    """
    c1, c2, f1, f2 = _two_levels(scene, cfg)
    coarse_shape, fine_shape = c1.shape[:2], f1.shape[:2]
    F0 = np.zeros(coarse_shape + (2,))
    R1 = np.zeros(fine_shape + (2,))
    eps, eta = cfg.charbonnier_eps, cfg.step
    trace = []
    path = [F0] if record_path else None
    prev = None
    for it in range(cfg.iterations):
        _check_finite(it, F0, R1)
        loss0, g0 = photometric_loss_and_grad(c1, c2, F0, eps)
        loss1, g1 = photometric_loss_and_grad(f1, f2, upsample_flow(F0, fine_shape) + R1, eps)
        if not (np.isfinite(loss0) and np.isfinite(loss1)):
            raise DivergenceError(it)
        via = upsample_flow_adjoint(g1, coarse_shape)
        applied0 = g0 if cfg.stop_gradient else g0 + via
        theta = np.concatenate([F0.ravel(), R1.ravel()])
        grad = np.concatenate([applied0.ravel(), g1.ravel()])
        b = None
        if prev is not None and np.any(theta != prev[0]):
            b = beta_eff(grad, prev[1], theta, prev[0])
        prev = (theta, grad)
        trace.append(GradTrace(it, loss0, loss1,
                               g0 if keep_snapshots else None,
                               via if keep_snapshots else None,
                               applied0, ncc(g0, via), b))
        with np.errstate(over="ignore", invalid="ignore"):
            F0 = F0 - eta * applied0
            R1 = R1 - eta * g1
        if record_path:
            path.append(F0)
    _check_finite(cfg.iterations, F0, R1)
    loss0, _ = photometric_loss_and_grad(c1, c2, F0, eps)
    fine = upsample_flow(F0, fine_shape) + R1
    loss1, _ = photometric_loss_and_grad(f1, f2, fine, eps)
    if not (np.isfinite(loss0) and np.isfinite(loss1)):
        raise DivergenceError(cfg.iterations)
    return DescentResult(trace, F0, R1, fine, loss0, loss1, path)


def descend_coarse_only(scene, cfg=SolveConfig()):
    """Descent on ``L0`` alone; returns the list of ``F0`` iterates (initial included)."""
    c1, c2, _, _ = _two_levels(scene, cfg)
    F0 = np.zeros(c1.shape[:2] + (2,))
    path = [F0]
    for it in range(cfg.iterations):
        _check_finite(it, F0)
        loss0, g0 = photometric_loss_and_grad(c1, c2, F0, cfg.charbonnier_eps)
        if not np.isfinite(loss0):
            raise DivergenceError(it)
        with np.errstate(over="ignore", invalid="ignore"):
            F0 = F0 - cfg.step * g0
        path.append(F0)
    _check_finite(cfg.iterations, F0)
    return path


@dataclass
class BatchSummary:
    """Per-iteration statistics over several seeded runs."""

    ncc: list
    beta_eff: list
    sigma2: list
    final_losses: list = field(default_factory=list)
    run_ncc: list = field(default_factory=list)

    def rows(self):
        return [(i, self.ncc[i], self.beta_eff[i], self.sigma2[i]) for i in range(len(self.ncc))]


def run_batch(specs, cfg=SolveConfig()):
    """Run :func:`two_level_descent` on each scene spec and aggregate.

    ``ncc`` and ``beta_eff`` are seed means per iteration; ``sigma2`` is the
    mean per-element variance, across runs, of the coarse-flow update
    direction (None with a single run).
    """
    results = [two_level_descent(gen_scene(s), cfg, keep_snapshots=False) for s in specs]
    n_iter = cfg.iterations
    ncc_rows, beta_rows, sigma_rows = [], [], []
    for i in range(n_iter):
        ncc_rows.append(float(np.mean([r.trace[i].ncc for r in results])))
        betas = [r.trace[i].beta_eff for r in results if r.trace[i].beta_eff is not None]
        beta_rows.append(float(np.mean(betas)) if betas else None)
        state = WelfordState()
        for r in results:
            state.update(r.trace[i].applied)
        sigma_rows.append(state.mean_variance() if state.count > 1 else None)
    return BatchSummary(ncc_rows, beta_rows, sigma_rows,
                        [r.final_loss for r in results], [r.mean_ncc() for r in results])
