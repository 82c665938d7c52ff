"""Select the compiled kernels when available, else the numpy fallback.

Set ``TRAWLKIT_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("TRAWLKIT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # not built
        _impl = _fallback

grid_window_sums = _impl.grid_window_sums
cpp_scatter = _impl.cpp_scatter
fast_convolution = _impl.fast_convolution
ambit_scatter = _impl.ambit_scatter
indicator_codes = _impl.indicator_codes
