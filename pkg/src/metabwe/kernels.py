"""Kernel backend selection.

The compiled extension is used when it imports; set ``METABWE_PURE_PYTHON=1``
to force the pure-Python fallback.
"""

import os
from contextlib import contextmanager

from . import _kernel_py as _py

if os.environ.get("METABWE_PURE_PYTHON"):
    _impl = _py
    BACKEND = "python"
else:
    try:
        from . import _kernel as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _py
        BACKEND = "python"

binomial_inv = _impl.binomial_inv
clip_rate = _impl.clip_rate
estimator_step = _impl.estimator_step
link_step = _impl.link_step
run_ticks = _impl.run_ticks


def backends():
    """Return ``{name: module}`` for every importable backend."""
    found = {"python": _py}
    try:
        from . import _kernel
    except ImportError:
        pass
    else:
        found["cython"] = _kernel
    return found


@contextmanager
def use_backend(name: str):
    """Temporarily route the module-level kernels to backend ``name``."""
    global BACKEND, binomial_inv, clip_rate, estimator_step, link_step, run_ticks
    found = backends()
    if name not in found:
        raise ValueError(f"backend {name!r} is not available (have {', '.join(found)})")
    saved = (BACKEND, binomial_inv, clip_rate, estimator_step, link_step, run_ticks)
    mod = found[name]
    BACKEND = name
    binomial_inv, clip_rate = mod.binomial_inv, mod.clip_rate
    estimator_step, link_step, run_ticks = mod.estimator_step, mod.link_step, mod.run_ticks
    try:
        yield mod
    finally:
        BACKEND, binomial_inv, clip_rate, estimator_step, link_step, run_ticks = saved
