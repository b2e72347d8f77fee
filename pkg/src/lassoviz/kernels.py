"""Backend selection for the hot loops.

The compiled module is used when it imported cleanly; set ``LASSOVIZ_PURE=1``
to force the numpy implementation.
"""
import os

from . import _npkernels

BACKEND = "numpy"
_impl = _npkernels

if not os.environ.get("LASSOVIZ_PURE"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _npkernels

im2col = _impl.im2col
col2im = _impl.col2im
maxpool = _impl.maxpool
unpool = _impl.unpool


def use_backend(name):
    """Switch kernels at runtime ("cython" or "numpy"); returns the previous backend name."""
    global im2col, col2im, maxpool, unpool, BACKEND
    previous = BACKEND
    if name == "cython":
        from . import _ckernels as impl
    elif name == "numpy":
        impl = _npkernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    im2col, col2im, maxpool, unpool = impl.im2col, impl.col2im, impl.maxpool, impl.unpool
    BACKEND = name
    return previous
