"""Backend selection for the numerical kernels.

The compiled ``_core`` extension is used when it imports; otherwise the
numpy implementation in ``_pycore`` takes over. Setting the environment
variable ``POSEFORGE_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _pycore

BACKEND = "python"
_impl = _pycore

if os.environ.get("POSEFORGE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pycore

rodrigues = _impl.rodrigues
rodrigues_derivs = _impl.rodrigues_derivs
project_points = _impl.project_points
project_points_jac = _impl.project_points_jac
rwhe_residuals = _impl.rwhe_residuals

__all__ = [
    "BACKEND",
    "rodrigues",
    "rodrigues_derivs",
    "project_points",
    "project_points_jac",
    "rwhe_residuals",
]
