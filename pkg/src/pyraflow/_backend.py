"""Kernel selection.

The compiled extension is used when it imports; otherwise the numpy
versions are used.  ``PYRAFLOW_BACKEND=numpy`` forces the fallback and
``PYRAFLOW_BACKEND=cython`` makes a missing extension an error.
``PYRAFLOW_THREADS`` caps the OpenMP thread count of the compiled kernels
(0 or unset = one thread per core).
"""
import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)

_KERNEL_NAMES = ("gather", "gather_grad", "sample_volume", "sample_volume_adjoint", "splat")


def _load(choice):
    if choice == "numpy":
        return _kernels_py, "numpy"
    try:
        from . import _kernels
    except ImportError:
        if choice == "cython":
            raise
        logger.debug("compiled kernels unavailable, using numpy fallback")
        return _kernels_py, "numpy"
    return _kernels, "cython"


def thread_count():
    raw = os.environ.get("PYRAFLOW_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PYRAFLOW_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("PYRAFLOW_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


class Kernels:
    """Thin namespace over one kernel module; injects the thread count."""

    def __init__(self, module, name):
        self.module = module
        self.name = name

    def __getattr__(self, attr):
        if attr not in _KERNEL_NAMES:
            raise AttributeError(attr)
        fn = getattr(self.module, attr)
        if attr == "splat":
            return fn
        return lambda *a: fn(*a, num_threads=thread_count())


def get_kernels(choice=None):
    choice = choice or os.environ.get("PYRAFLOW_BACKEND", "auto")
    if choice not in ("auto", "cython", "numpy"):
        raise ValueError(f"unknown backend {choice!r}")
    return Kernels(*_load(choice))


kernels = get_kernels()
BACKEND = kernels.name


def use_backend(choice):
    """Switch the process-wide kernels; returns the previous backend name."""
    global kernels, BACKEND
    prev = BACKEND
    kernels = get_kernels(choice)
    BACKEND = kernels.name
    return prev
