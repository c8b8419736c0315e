"""Kernel backend selection.

The compiled extension is preferred.  Setting ``FORCINGSET_PURE_PYTHON=1``
(or failing to import the extension) selects the NumPy fallback.  ``BACKEND``
names the active one.
"""

import os

from . import _pykernels

if os.environ.get("FORCINGSET_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

logits = _impl.logits
sample_losses = _impl.sample_losses
sample_grads = _impl.sample_grads
loss_grad = _impl.loss_grad
hessian = _impl.hessian

__all__ = ["BACKEND", "logits", "sample_losses", "sample_grads", "loss_grad", "hessian"]
