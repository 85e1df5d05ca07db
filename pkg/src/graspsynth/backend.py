"""Kernel backend selection.

The compiled ``_core`` extension is used when importable; set
``GRASPSYNTH_PURE=1`` to force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _fallback

if os.environ.get("GRASPSYNTH_PURE", "") not in ("", "0"):
    kernels = _fallback
    NAME = "python"
else:
    try:
        from . import _core as kernels  # type: ignore[no-redef]

        NAME = "compiled"
    except ImportError:  # extension not built
        kernels = _fallback
        NAME = "python"

triangle_distances = kernels.triangle_distances
winding_numbers = kernels.winding_numbers
trilinear = kernels.trilinear
EnergyKernel = kernels.EnergyKernel

__all__ = ["NAME", "EnergyKernel", "kernels", "triangle_distances", "trilinear", "winding_numbers"]
