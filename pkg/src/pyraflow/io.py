"""Flow file formats and visualisation.

``.flo`` (Middlebury): float32 magic 202021.25, int32 width, int32 height,
then ``H*W`` interleaved ``(u, v)`` float32 pairs, row-major, little-endian.

KITTI flow PNG: 16-bit, 3 channels in RGB order; ``u = (R - 2**15) / 64``,
``v = (G - 2**15) / 64``, valid where ``B > 0``.
"""
import os
import struct

import cv2
import numpy as np

from .core import FlowField
from .errors import FormatError, InputError

FLO_MAGIC = 202021.25
_FLO_HEADER = struct.Struct("<fii")
KITTI_OFFSET = 2 ** 15
KITTI_SCALE = 64.0
KITTI_LIMIT = 512.0
_MAX_DIM = 1 << 20


def write_flo(path, flow):
    flow = np.asarray(flow.data if isinstance(flow, FlowField) else flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise InputError(f"flow must have shape (H, W, 2), got {flow.shape}")
    H, W = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(_FLO_HEADER.pack(FLO_MAGIC, W, H))
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flo(path):
    """Read a ``.flo`` file into a float32 ``(H, W, 2)`` array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _FLO_HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} of {_FLO_HEADER.size} bytes)")
    magic, W, H = _FLO_HEADER.unpack_from(raw)
    if magic != FLO_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    if not (0 < W <= _MAX_DIM and 0 < H <= _MAX_DIM):
        raise FormatError(f"{path}: implausible size {W}x{H}")
    need = _FLO_HEADER.size + 8 * W * H
    if len(raw) < need:
        raise FormatError(f"{path}: truncated payload, data ends at byte offset {len(raw)}, "
                          f"expected {need}")
    if len(raw) > need:
        raise FormatError(f"{path}: {len(raw) - need} trailing bytes after offset {need}")
    data = np.frombuffer(raw, dtype="<f4", count=2 * W * H, offset=_FLO_HEADER.size)
    return data.reshape(H, W, 2).astype(np.float32)


def encode_kitti(flow, valid=None):
    """Pack a flow into the 16-bit KITTI channel layout (RGB order)."""
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise InputError(f"flow must have shape (H, W, 2), got {flow.shape}")
    valid = np.ones(flow.shape[:2], bool) if valid is None else np.asarray(valid, bool)
    flow = np.where(valid[..., None], flow, 0.0)
    if np.any(~np.isfinite(flow)) or np.any(np.abs(flow) >= KITTI_LIMIT):
        raise InputError(f"KITTI PNG can only encode |flow| < {KITTI_LIMIT} px")
    out = np.empty(flow.shape[:2] + (3,), dtype=np.uint16)
    out[..., :2] = np.clip(np.round(flow * KITTI_SCALE + KITTI_OFFSET), 0, 65535)
    out[..., 2] = valid
    return out


def decode_kitti(rgb):
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint16:
        raise FormatError(f"KITTI flow PNG must be 16-bit, 3 channels; got {rgb.dtype} {rgb.shape}")
    flow = (rgb[..., :2].astype(np.float64) - KITTI_OFFSET) / KITTI_SCALE
    return FlowField(flow, rgb[..., 2] > 0)


def write_kitti_png(path, flow, valid=None):
    if isinstance(flow, FlowField):
        flow, valid = flow.data, flow.valid if valid is None else valid
    rgb = encode_kitti(flow, valid)
    if not cv2.imwrite(str(path), rgb[..., ::-1]):
        raise OSError(f"could not write {path}")


def read_kitti_png(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    bgr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if bgr is None:
        raise FormatError(f"{path}: not a readable PNG")
    if bgr.ndim != 3:
        raise FormatError(f"{path}: expected 3 channels, got shape {bgr.shape}")
    return decode_kitti(bgr[..., ::-1])


def write_mask_png(path, mask):
    if not cv2.imwrite(str(path), np.asarray(mask, bool).astype(np.uint8) * 255):
        raise OSError(f"could not write {path}")


def read_mask_png(path):
    m = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if m is None:
        raise FormatError(f"{path}: not a readable image")
    return (m if m.ndim == 2 else m[..., 0]) > 0


def mask_path_for(flo_path):
    root, _ = os.path.splitext(str(flo_path))
    return root + "_valid.png"


def read_flow(path):
    """Read ``.flo`` (with optional ``*_valid.png`` sibling) or KITTI ``.png``."""
    path = str(path)
    if path.lower().endswith(".flo"):
        data = read_flo(path).astype(np.float64)
        mpath = mask_path_for(path)
        valid = read_mask_png(mpath) if os.path.exists(mpath) else None
        return FlowField(data, valid)
    if path.lower().endswith(".png"):
        return read_kitti_png(path)
    raise FormatError(f"{path}: unknown flow extension (expected .flo or .png)")


def write_flow(path, flow, valid=None):
    """Write by extension; ``.flo`` gets a ``*_valid.png`` sibling when a mask is given."""
    if isinstance(flow, FlowField):
        flow, valid = flow.data, flow.valid if valid is None else valid
    path = str(path)
    if path.lower().endswith(".flo"):
        write_flo(path, flow)
        if valid is not None:
            write_mask_png(mask_path_for(path), valid)
    elif path.lower().endswith(".png"):
        write_kitti_png(path, flow, valid)
    else:
        raise FormatError(f"{path}: unknown flow extension (expected .flo or .png)")


def read_image(path):
    """Read an 8- or 16-bit image as float64 in [0, 1], RGB channel order."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(f"{path}: not a readable image")
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    img = img.astype(np.float64) / scale
    if img.ndim == 3:
        img = img[..., ::-1]
    return img


def read_scalar_map(path):
    """Per-pixel scalars from ``.npy`` or a grayscale image scaled to [0, 1]."""
    path = str(path)
    if path.lower().endswith(".npy"):
        return np.load(path).astype(np.float64)
    img = read_image(path)
    return img if img.ndim == 2 else img.mean(-1)


def write_image(path, rgb):
    rgb = np.asarray(rgb)
    if rgb.ndim == 3:
        rgb = rgb[..., ::-1]
    if not cv2.imwrite(str(path), rgb):
        raise OSError(f"could not write {path}")


def make_colorwheel():
    """Middlebury flow colour wheel, ``(55, 3)`` floats in [0, 255]."""
    RY, YG, GC, CB, BM, MR = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((RY + YG + GC + CB + BM + MR, 3))
    col = 0
    wheel[col:col + RY, 0] = 255
    wheel[col:col + RY, 1] = np.floor(255 * np.arange(RY) / RY)
    col += RY
    wheel[col:col + YG, 0] = 255 - np.floor(255 * np.arange(YG) / YG)
    wheel[col:col + YG, 1] = 255
    col += YG
    wheel[col:col + GC, 1] = 255
    wheel[col:col + GC, 2] = np.floor(255 * np.arange(GC) / GC)
    col += GC
    wheel[col:col + CB, 1] = 255 - np.floor(255 * np.arange(CB) / CB)
    wheel[col:col + CB, 2] = 255
    col += CB
    wheel[col:col + BM, 2] = 255
    wheel[col:col + BM, 0] = np.floor(255 * np.arange(BM) / BM)
    col += BM
    wheel[col:col + MR, 2] = 255 - np.floor(255 * np.arange(MR) / MR)
    wheel[col:col + MR, 0] = 255
    return wheel


def colorize_flow(flow, max_mag=None):
    """8-bit RGB rendering; zero flow is white, magnitude saturates at ``max_mag``."""
    flow = np.asarray(flow.data if isinstance(flow, FlowField) else flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    if max_mag is None:
        max_mag = float(mag.max()) if mag.size and mag.max() > 0 else 1.0
    if max_mag <= 0:
        raise InputError("max_mag must be positive")
    rad = np.minimum(mag / max_mag, 1.0)
    wheel = make_colorwheel() / 255.0
    ncols = len(wheel)
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1) / 2 * (ncols - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    f = (fk - k0)[..., None]
    col = (1 - f) * wheel[k0] + f * wheel[k1]
    col = 1 - rad[..., None] * (1 - col)
    return np.floor(255 * col + 0.5).astype(np.uint8)
