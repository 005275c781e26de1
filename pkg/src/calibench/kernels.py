"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy versions in ``_purepy`` are used. Set ``CALIBENCH_PURE=1`` to force
the numpy backend.
"""

from __future__ import annotations

import os

from . import _purepy

_compiled = None
if os.environ.get("CALIBENCH_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _purepy
BACKEND = "compiled" if _compiled is not None else "python"

rolling_stats = _impl.rolling_stats
rolling_likelihood = _impl.rolling_likelihood
nab_window_scores = _impl.nab_window_scores
iforest_path_lengths = _impl.iforest_path_lengths


def backends() -> dict:
    """All importable backends by name, for parity tests and benchmarks."""
    out = {"python": _purepy}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
