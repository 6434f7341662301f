"""Environment kernels: compiled extension when built, pure Python otherwise.

Set ``MANET_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("MANET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

render_nav = _impl.render_nav
encode_views = _impl.encode_views
spot_targets = _impl.spot_targets

__all__ = ["BACKEND", "render_nav", "encode_views", "spot_targets"]
