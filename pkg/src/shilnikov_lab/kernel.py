"""Select the inner-flow kernel backend.

The compiled extension ``_kernel`` is used when it imports; otherwise the
pure-Python ``_kernel_py`` is used.  Setting the environment variable
``SHILNIKOV_LAB_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _kernel_py

if os.environ.get("SHILNIKOV_LAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernel_py
    BACKEND = "python"
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernel_py
        BACKEND = "python"

inner_flow = _impl.inner_flow
inner_flow_py = _kernel_py.inner_flow
inner_flow_path = _impl.inner_flow_path
