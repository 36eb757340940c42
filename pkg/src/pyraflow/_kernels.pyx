# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pixel kernels.

Every function here has a numpy twin in ``_kernels_py`` with the same
signature; ``_backend`` picks one at import time.  Sampling uses the
border-clamp rule and the right-sided cell convention of ``pyraflow.core``.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport floor, fabs

cnp.import_array()


cdef inline void _cell(double x, Py_ssize_t n, Py_ssize_t* i0, Py_ssize_t* i1,
                       double* frac, bint* inside) noexcept nogil:
    cdef double xc = x
    cdef Py_ssize_t top = n - 2 if n >= 2 else 0
    inside[0] = (x >= 0.0) and (x <= n - 1.0)
    if xc < 0.0:
        xc = 0.0
    elif xc > n - 1.0:
        xc = n - 1.0
    i0[0] = <Py_ssize_t>floor(xc)
    if i0[0] > top:
        i0[0] = top
    i1[0] = i0[0] + 1 if i0[0] + 1 < n else n - 1
    frac[0] = xc - i0[0]


cdef inline double _lerp2(double p00, double p01, double p10, double p11,
                          double fu, double fv) noexcept nogil:
    return (1.0 - fv) * ((1.0 - fu) * p00 + fu * p01) + fv * ((1.0 - fu) * p10 + fu * p11)


cdef inline double _sign(double x) noexcept nogil:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


cdef inline void _gather_one(const double[:, :, ::1] img, double u, double v,
                             double[:, ::1] o, double[:, ::1] ou, double[:, ::1] ov,
                             Py_ssize_t n, bint want_grad) noexcept nogil:
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1], C = img.shape[2]
    cdef Py_ssize_t c, u0, u1, v0, v1
    cdef double fu, fv, p00, p01, p10, p11
    cdef bint iu, iv
    _cell(u, W, &u0, &u1, &fu, &iu)
    _cell(v, H, &v0, &v1, &fv, &iv)
    for c in range(C):
        p00 = img[v0, u0, c]
        p01 = img[v0, u1, c]
        p10 = img[v1, u0, c]
        p11 = img[v1, u1, c]
        o[n, c] = _lerp2(p00, p01, p10, p11, fu, fv)
        if want_grad:
            ou[n, c] = ((1.0 - fv) * (p01 - p00) + fv * (p11 - p10)) if iu else 0.0
            ov[n, c] = ((1.0 - fu) * (p10 - p00) + fu * (p11 - p01)) if iv else 0.0


def gather(const double[:, :, ::1] img, const double[::1] u, const double[::1] v,
           int num_threads=1):
    cdef Py_ssize_t N = u.shape[0], n
    out = np.empty((N, img.shape[2]), dtype=np.float64)
    cdef double[:, ::1] o = out
    for n in prange(N, nogil=True, num_threads=num_threads, schedule="static"):
        _gather_one(img, u[n], v[n], o, o, o, n, False)
    return out


def gather_grad(const double[:, :, ::1] img, const double[::1] u, const double[::1] v,
                int num_threads=1):
    cdef Py_ssize_t N = u.shape[0], n
    val = np.empty((N, img.shape[2]), dtype=np.float64)
    gu = np.empty((N, img.shape[2]), dtype=np.float64)
    gv = np.empty((N, img.shape[2]), dtype=np.float64)
    cdef double[:, ::1] o = val
    cdef double[:, ::1] ou = gu
    cdef double[:, ::1] ov = gv
    for n in prange(N, nogil=True, num_threads=num_threads, schedule="static"):
        _gather_one(img, u[n], v[n], o, ou, ov, n, True)
    return val, gu, gv


cdef void _volume_row(const double[:, :, ::1] I1, const double[:, :, ::1] I2,
                      const double[:, :, ::1] flow, int delta, bint sad,
                      double[:, :, ::1] o, Py_ssize_t y) noexcept nogil:
    cdef Py_ssize_t H = I1.shape[0], W = I1.shape[1], C = I1.shape[2]
    cdef Py_ssize_t D = 2 * delta + 1, K = D * D
    cdef Py_ssize_t x, k, c, u0, u1, v0, v1
    cdef double fu, fv, s, b, pu, pv
    cdef bint iu, iv
    for x in range(W):
        for k in range(K):
            pu = (x + (k % D - delta)) + flow[y, x, 0]
            pv = (y + (k // D - delta)) + flow[y, x, 1]
            _cell(pu, W, &u0, &u1, &fu, &iu)
            _cell(pv, H, &v0, &v1, &fv, &iv)
            s = 0.0
            for c in range(C):
                b = _lerp2(I2[v0, u0, c], I2[v0, u1, c], I2[v1, u0, c], I2[v1, u1, c], fu, fv)
                if sad:
                    s = s + fabs(I1[y, x, c] - b)
                else:
                    s = s + I1[y, x, c] * b
            o[y, x, k] = s / C


def sample_volume(const double[:, :, ::1] I1, const double[:, :, ::1] I2,
                  const double[:, :, ::1] flow, int delta, bint sad, int num_threads=1):
    cdef Py_ssize_t H = I1.shape[0], K = (2 * delta + 1) ** 2, y
    out = np.empty((H, I1.shape[1], K), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    for y in prange(H, nogil=True, num_threads=num_threads, schedule="static"):
        _volume_row(I1, I2, flow, delta, sad, o, y)
    return out


cdef void _adjoint_row(const double[:, :, ::1] I1, const double[:, :, ::1] I2,
                       const double[:, :, ::1] flow, int delta, bint sad,
                       const double[:, :, ::1] upstream, double[:, :, ::1] o,
                       Py_ssize_t y) noexcept nogil:
    cdef Py_ssize_t H = I1.shape[0], W = I1.shape[1], C = I1.shape[2]
    cdef Py_ssize_t D = 2 * delta + 1, K = D * D
    cdef Py_ssize_t x, k, c, u0, u1, v0, v1
    cdef double fu, fv, pu, pv, p00, p01, p10, p11, w, du, dv, gu, gv, b
    cdef bint iu, iv
    for x in range(W):
        gu = 0.0
        gv = 0.0
        for k in range(K):
            pu = (x + (k % D - delta)) + flow[y, x, 0]
            pv = (y + (k // D - delta)) + flow[y, x, 1]
            _cell(pu, W, &u0, &u1, &fu, &iu)
            _cell(pv, H, &v0, &v1, &fv, &iv)
            for c in range(C):
                p00 = I2[v0, u0, c]
                p01 = I2[v0, u1, c]
                p10 = I2[v1, u0, c]
                p11 = I2[v1, u1, c]
                if sad:
                    b = _lerp2(p00, p01, p10, p11, fu, fv)
                    w = -_sign(I1[y, x, c] - b)
                else:
                    w = I1[y, x, c]
                w = w * upstream[y, x, k] / C
                du = ((1.0 - fv) * (p01 - p00) + fv * (p11 - p10)) if iu else 0.0
                dv = ((1.0 - fu) * (p10 - p00) + fu * (p11 - p01)) if iv else 0.0
                gu = gu + w * du
                gv = gv + w * dv
        o[y, x, 0] = gu
        o[y, x, 1] = gv


def sample_volume_adjoint(const double[:, :, ::1] I1, const double[:, :, ::1] I2,
                          const double[:, :, ::1] flow, int delta, bint sad,
                          const double[:, :, ::1] upstream, int num_threads=1):
    cdef Py_ssize_t H = I1.shape[0], y
    out = np.zeros((H, I1.shape[1], 2), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    for y in prange(H, nogil=True, num_threads=num_threads, schedule="static"):
        _adjoint_row(I1, I2, flow, delta, sad, upstream, o, y)
    return out


def splat(const double[:, :, ::1] flow, const unsigned char[:, ::1] valid):
    # Sequential on purpose: accumulation order is part of the contract.
    cdef Py_ssize_t H = flow.shape[0], W = flow.shape[1]
    cdef Py_ssize_t y, x, a, b, tu, tv
    cdef double pu, pv, fu, fv, wu, wv, w
    cdef Py_ssize_t bu, bv
    acc = np.zeros((H, W, 2), dtype=np.float64)
    wsum = np.zeros((H, W), dtype=np.float64)
    cdef double[:, :, ::1] A = acc
    cdef double[:, ::1] S = wsum
    for y in range(H):
        for x in range(W):
            if not valid[y, x]:
                continue
            pu = x + flow[y, x, 0]
            pv = y + flow[y, x, 1]
            bu = <Py_ssize_t>floor(pu)
            bv = <Py_ssize_t>floor(pv)
            fu = pu - bu
            fv = pv - bv
            for b in range(2):
                tv = bv + b
                wv = fv if b else 1.0 - fv
                if tv < 0 or tv >= H or wv <= 0.0:
                    continue
                for a in range(2):
                    tu = bu + a
                    wu = fu if a else 1.0 - fu
                    if tu < 0 or tu >= W or wu <= 0.0:
                        continue
                    w = wu * wv
                    A[tv, tu, 0] += w * flow[y, x, 0]
                    A[tv, tu, 1] += w * flow[y, x, 1]
                    S[tv, tu] += w
    return acc, wsum
