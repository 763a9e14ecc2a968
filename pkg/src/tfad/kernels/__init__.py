"""WKV scan kernels: compiled core with a pure-Python fallback.

The compiled extension is preferred when it imported cleanly; set
``TFAD_WKV_BACKEND=python`` to force the fallback (used by the benchmark
and by tests that compare the two).
"""

import os

from tfad.kernels import wkv_python

if os.environ.get("TFAD_WKV_BACKEND", "").lower() == "python":
    _impl = wkv_python
    BACKEND = "python"
else:
    try:
        from tfad.kernels import _wkv_cython as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = wkv_python
        BACKEND = "python"

wkv_forward = _impl.wkv_forward
wkv_backward = _impl.wkv_backward

__all__ = ["wkv_forward", "wkv_backward", "BACKEND", "wkv_python"]
