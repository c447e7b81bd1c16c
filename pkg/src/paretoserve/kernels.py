"""Kernel backend selection.

Imports the compiled extension when it is available, otherwise the pure-Python
fallback.  ``PARETOSERVE_PURE=1`` forces the fallback (useful for the
benchmark and for debugging).  Both backends are bit-identical.
"""

import os

if os.environ.get("PARETOSERVE_PURE"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as _impl  # type: ignore[no-redef]

BACKEND = _impl.BACKEND
stream_state = _impl.stream_state
stream_uniform = _impl.stream_uniform
laplace_quantile = _impl.laplace_quantile
truth_label = _impl.truth_label
serve_pick = _impl.serve_pick
