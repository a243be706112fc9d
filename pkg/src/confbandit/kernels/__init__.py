"""Backend selection for the numeric kernels.

The compiled extension is preferred when present; the numpy module is the
fallback and the reference.  CONFBANDIT_BACKEND overrides the choice:
``auto`` (default), ``cython``, or ``python``.  The active backend name is
exported as BACKEND and recorded in run manifests, because the two backends
accumulate floating point in different orders and are only required to agree
to rounding error, not bit for bit.
"""

from __future__ import annotations

import os

from ..errors import ValidationError

_REQUESTED = os.environ.get("CONFBANDIT_BACKEND", "auto").strip().lower()
if _REQUESTED not in {"auto", "cython", "python"}:
    raise ValidationError(
        f"CONFBANDIT_BACKEND must be auto|cython|python, got {_REQUESTED!r}"
    )

if _REQUESTED in ("auto", "cython"):
    try:
        from . import _cykernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        if _REQUESTED == "cython":
            raise
        from . import pykernels as _impl

        BACKEND = "python"
else:
    from . import pykernels as _impl

    BACKEND = "python"

dense_linear = _impl.dense_linear
dense_tanh = _impl.dense_tanh
dense_relu = _impl.dense_relu
grad_dense = _impl.grad_dense
tanh_backward = _impl.tanh_backward
relu_backward = _impl.relu_backward
softmax = _impl.softmax
log_softmax = _impl.log_softmax
categorical_from_uniform = _impl.categorical_from_uniform

__all__ = [
    "BACKEND",
    "categorical_from_uniform",
    "dense_linear",
    "dense_relu",
    "dense_tanh",
    "grad_dense",
    "log_softmax",
    "relu_backward",
    "softmax",
    "tanh_backward",
]
