"""Backend selection for the quadrature hot loop.

The compiled extension is used when it was built; otherwise the numpy
implementation is loaded. Set ``LINKSHADOW_PURE_PYTHON=1`` to force the
fallback.
"""

import os

if os.environ.get("LINKSHADOW_PURE_PYTHON", "") not in ("", "0"):
    from ._quad_py import BACKEND, integrate_triangle
else:
    try:
        from ._quad_ext import BACKEND, integrate_triangle
    except ImportError:
        from ._quad_py import BACKEND, integrate_triangle

__all__ = ["BACKEND", "integrate_triangle"]
