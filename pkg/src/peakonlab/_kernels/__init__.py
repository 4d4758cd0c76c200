"""Kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementations when
the extension was not built.  Set PEAKONLAB_FORCE_PYTHON=1 to force the
fallback (used by the parity tests and the benchmark).
"""

import os

if os.environ.get("PEAKONLAB_FORCE_PYTHON"):
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykernels as _impl

eval_train = _impl.eval_train
ode_rhs = _impl.ode_rhs
rk4_path = _impl.rk4_path
exp_accumulate = _impl.exp_accumulate


def backend_name():
    return _impl.BACKEND
