"""Selects the compiled kernels when available, else the numpy fallback.

Set ``BBMMED_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels as python

compiled = None
if not os.environ.get("BBMMED_PURE_PYTHON"):
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

active = compiled if compiled is not None else python
BACKEND = "cython" if compiled is not None else "python"

advance_path = active.advance_path
zoh_runs = active.zoh_runs
