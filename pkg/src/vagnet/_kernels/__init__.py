"""Hot-path kernels with a compiled core and a NumPy fallback.

The Cython extension ``vagnet._kernels._native`` is preferred when it was
built; otherwise the NumPy reference in ``pyk`` is selected. Setting
VAGNET_NO_EXT=1 forces the fallback (used by the backend benchmark and for
debugging). Matrix products are not dispatched here: both backends use BLAS
through ``numpy.matmul``.
"""

import os

from . import pyk

if os.environ.get("VAGNET_NO_EXT") == "1":
    _native = None
else:
    try:
        from . import _native
    except ImportError:
        _native = None

_impl = _native if _native is not None else pyk


def backend() -> str:
    """Name of the selected kernel backend: ``"native"`` or ``"numpy"``."""
    return "native" if _impl is not pyk else "numpy"


def native_module():
    """The compiled module, or None when it is not built."""
    return _native


softmax_rows_fwd = _impl.softmax_rows_fwd
softmax_rows_bwd = _impl.softmax_rows_bwd
layer_norm_fwd = _impl.layer_norm_fwd
layer_norm_bwd = _impl.layer_norm_bwd
relu_fwd = _impl.relu_fwd
relu_bwd = _impl.relu_bwd
softmax_xent_fwd = _impl.softmax_xent_fwd
softmax_xent_bwd = _impl.softmax_xent_bwd
adam_update = _impl.adam_update
