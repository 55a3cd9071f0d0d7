"""Pick the SGD kernel at import: compiled extension if built, else pure Python.

Set ``BANDITSGD_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernel_py

if os.environ.get("BANDITSGD_BACKEND", "").lower() == "python":
    run_steps = _kernel_py.run_steps
    BACKEND = "python"
else:
    try:
        from ._kernel import run_steps
        BACKEND = "compiled"
    except ImportError:
        run_steps = _kernel_py.run_steps
        BACKEND = "python"

BACKENDS = {"python": _kernel_py.run_steps}
try:
    from ._kernel import run_steps as _compiled

    BACKENDS["compiled"] = _compiled
except ImportError:
    pass
