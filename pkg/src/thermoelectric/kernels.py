"""Kernel backend selection.

The compiled extension ``_kernels`` is used when it was built; otherwise, or
when ``THERMOELECTRIC_PURE_PYTHON`` is set to a non-empty value other than
``0``, the numpy fallback in ``_kernels_py`` is used.
"""
import os

from . import _kernels_py

_want_pure = os.environ.get("THERMOELECTRIC_PURE_PYTHON", "") not in ("", "0")

if _want_pure:
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.IMPLEMENTATION
_threads = 1


def set_num_threads(n: int) -> None:
    global _threads
    _threads = max(1, int(n))


def get_num_threads() -> int:
    return _threads


def stencil_apply(cx, cy, cz, x, out):
    return _impl.stencil_apply(cx, cy, cz, x, out, _threads)


def ball_oscillation(u, xs, ys, zs, centers, radii):
    return _impl.ball_oscillation(u, xs, ys, zs, centers, radii, _threads)
