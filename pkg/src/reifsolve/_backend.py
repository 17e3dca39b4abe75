"""Pick the compiled core when it is importable, else the numpy fallback.

Set ``REIFSOLVE_PURE=1`` to force the fallback.
"""
import os

core = None
if os.environ.get("REIFSOLVE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _core as core
    except ImportError:
        core = None
if core is None:
    from . import _core_py as core

BACKEND = core.BACKEND
cell_integrals = core.cell_integrals
segment_distance = core.segment_distance
