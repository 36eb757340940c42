"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures, same clamp/cell conventions; results agree with the
compiled versions up to floating point summation order.
"""
import numpy as np


def _cell(x, n):
    xc = np.clip(x, 0.0, n - 1.0)
    i0 = np.minimum(np.floor(xc), max(n - 2, 0)).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = xc - i0
    inside = (x >= 0.0) & (x <= n - 1.0)
    return i0, i1, frac, inside


def _corners(img, u, v):
    H, W = img.shape[:2]
    u0, u1, fu, iu = _cell(u, W)
    v0, v1, fv, iv = _cell(v, H)
    p00 = img[v0, u0]
    p01 = img[v0, u1]
    p10 = img[v1, u0]
    p11 = img[v1, u1]
    return p00, p01, p10, p11, fu[:, None], fv[:, None], iu[:, None], iv[:, None]


def _lerp2(p00, p01, p10, p11, fu, fv):
    return (1.0 - fv) * ((1.0 - fu) * p00 + fu * p01) + fv * ((1.0 - fu) * p10 + fu * p11)


def gather(img, u, v, num_threads=1):
    p00, p01, p10, p11, fu, fv, _, _ = _corners(img, u, v)
    return _lerp2(p00, p01, p10, p11, fu, fv)


def gather_grad(img, u, v, num_threads=1):
    p00, p01, p10, p11, fu, fv, iu, iv = _corners(img, u, v)
    val = _lerp2(p00, p01, p10, p11, fu, fv)
    gu = np.where(iu, (1.0 - fv) * (p01 - p00) + fv * (p11 - p10), 0.0)
    gv = np.where(iv, (1.0 - fu) * (p10 - p00) + fu * (p11 - p01), 0.0)
    return val, gu, gv


def _probe_coords(flow, delta):
    H, W = flow.shape[:2]
    gy, gx = np.mgrid[0:H, 0:W].astype(np.float64)
    for dv in range(-delta, delta + 1):
        for du in range(-delta, delta + 1):
            yield (gx + du) + flow[..., 0], (gy + dv) + flow[..., 1]


def sample_volume(I1, I2, flow, delta, sad, num_threads=1):
    H, W, C = I1.shape
    a = I1.reshape(-1, C)
    out = np.empty((H * W, (2 * delta + 1) ** 2))
    for k, (pu, pv) in enumerate(_probe_coords(flow, delta)):
        b = gather(I2, pu.ravel(), pv.ravel())
        out[:, k] = (np.abs(a - b) if sad else a * b).sum(axis=1) / C
    return out.reshape(H, W, -1)


def sample_volume_adjoint(I1, I2, flow, delta, sad, upstream, num_threads=1):
    H, W, C = I1.shape
    a = I1.reshape(-1, C)
    up = upstream.reshape(H * W, -1)
    gu = np.zeros(H * W)
    gv = np.zeros(H * W)
    for k, (pu, pv) in enumerate(_probe_coords(flow, delta)):
        b, du, dv = gather_grad(I2, pu.ravel(), pv.ravel())
        w = -np.sign(a - b) if sad else a
        w = w * up[:, k:k + 1] / C
        gu += (w * du).sum(axis=1)
        gv += (w * dv).sum(axis=1)
    return np.stack([gu, gv], axis=-1).reshape(H, W, 2)


def splat(flow, valid):
    H, W = flow.shape[:2]
    acc = np.zeros((H * W, 2))
    wsum = np.zeros(H * W)
    gy, gx = np.mgrid[0:H, 0:W]
    m = valid.astype(bool)
    pu = gx[m] + flow[..., 0][m]
    pv = gy[m] + flow[..., 1][m]
    src = flow[m]
    bu = np.floor(pu).astype(np.intp)
    bv = np.floor(pv).astype(np.intp)
    fu = pu - bu
    fv = pv - bv
    for b in (0, 1):
        wv = fv if b else 1.0 - fv
        for a in (0, 1):
            wu = fu if a else 1.0 - fu
            tu = bu + a
            tv = bv + b
            w = wu * wv
            keep = (tu >= 0) & (tu < W) & (tv >= 0) & (tv < H) & (wu > 0) & (wv > 0)
            idx = tv[keep] * W + tu[keep]
            np.add.at(acc, idx, w[keep, None] * src[keep])
            np.add.at(wsum, idx, w[keep])
    return acc.reshape(H, W, 2), wsum.reshape(H, W)
