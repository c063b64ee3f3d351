"""Numba switch for the compiled kernels.

Set ``RTMODES_DISABLE_JIT=1`` to route every kernel through its pure-numpy
fallback instead of the compiled loop version.
"""
import os

JIT_ENABLED = os.environ.get("RTMODES_DISABLE_JIT", "0").strip().lower() not in ("1", "true", "yes", "on")

if JIT_ENABLED:
    try:
        import numba  # noqa: F401
    except ImportError:  # pragma: no cover
        JIT_ENABLED = False


def select(loop_impl, numpy_impl):
    """Return the compiled loop kernel when JIT is on, else the numpy one."""
    if JIT_ENABLED:
        from numba import njit

        return njit(cache=True)(loop_impl)
    return numpy_impl
