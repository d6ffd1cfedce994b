"""Picks the compiled kernels when available, else the pure-Python ones.

Set ``WSREC_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("WSREC_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import als_half_pass, bpr_epoch

    BACKEND = "python"
else:
    try:
        from ._kernels import als_half_pass, bpr_epoch

        BACKEND = "compiled"
    except ImportError:
        from ._kernels_py import als_half_pass, bpr_epoch

        BACKEND = "python"

__all__ = ["BACKEND", "als_half_pass", "bpr_epoch"]
