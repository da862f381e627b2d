"""Backend selection for the propagation kernels.

The compiled extension is used when it was built; set ``SPINMEM_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("SPINMEM_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

free_evolve = _impl.free_evolve
conjugate = _impl.conjugate

BACKENDS = {"python": _pykernels}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl
