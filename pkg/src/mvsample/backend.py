"""Kernel backend selection.

The compiled extension (mvsample._core, built from _core.pyx) is preferred;
the numpy fallback (_core_py) keeps everything working without a compiler.
Set MVSAMPLE_BACKEND=python or =compiled to force a choice; "compiled" raises
if the extension is missing rather than silently degrading.
"""

from __future__ import annotations

import os

from . import _core_py

_choice = os.environ.get("MVSAMPLE_BACKEND", "auto").lower()
if _choice not in ("auto", "python", "compiled"):
    raise ImportError(f"MVSAMPLE_BACKEND must be auto, python or compiled, got {_choice!r}")

if _choice == "python":
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise ImportError(
                "MVSAMPLE_BACKEND=compiled but mvsample._core is not built; "
                "run: python setup_ext.py build_ext --inplace"
            )
        _impl = _core_py
        BACKEND = "python"

composite_splats = _impl.composite_splats
march_visibility = _impl.march_visibility

ALPHA_MIN = _core_py.ALPHA_MIN
ALPHA_CAP = _core_py.ALPHA_CAP
