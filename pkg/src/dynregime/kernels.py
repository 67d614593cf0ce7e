"""Backend selection for the compiled kernels (scoring and the cell-density flux).

The compiled extension is used when it imports; otherwise, or when
``DYNREGIME_PURE_PYTHON`` is set to a non-empty value, the numpy versions are.
"""

import os

from . import _kernels_py

if os.environ.get("DYNREGIME_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

row_scores = _impl.row_scores
mask_objectives = _impl.mask_objectives
n_flux_divergence = _impl.n_flux_divergence


def backends():
    """Available implementations keyed by name (used by tests and benchmarks)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["compiled"] = _kernels
    except ImportError:
        pass
    return out
