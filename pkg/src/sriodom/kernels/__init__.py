"""Kernel backend selection.

The compiled extension (sriodom.kernels._native) is used when it imported
cleanly; otherwise the pure-numpy backend takes over. Set SRIODOM_PURE_PYTHON=1
to force the numpy backend regardless.
"""

import os

from . import _numpy

_impl = _numpy
if os.environ.get("SRIODOM_PURE_PYTHON", "0") not in ("1", "true", "yes"):
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        pass

BACKEND = _impl.BACKEND

scatter_min_range = _impl.scatter_min_range
convolve3x3_valid = _impl.convolve3x3_valid
fit_lines = _impl.fit_lines
fit_planes = _impl.fit_planes
accum_point_to_line = _impl.accum_point_to_line
accum_point_to_plane = _impl.accum_point_to_plane


def available_backends():
    """All importable backend modules, python fallback first."""
    backends = [_numpy]
    try:
        from . import _native

        backends.append(_native)
    except ImportError:
        pass
    return backends
