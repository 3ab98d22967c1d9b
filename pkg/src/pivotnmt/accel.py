"""Numba acceleration switch.

Hot kernels in :mod:`pivotnmt.kernels` exist in two variants: a loop-style
function compiled with ``numba.njit`` and a vectorized pure-numpy fallback.
Which variant gets bound to the public kernel names is decided once, at
import time:

* ``PIVOTNMT_NO_NUMBA=1`` in the environment forces the numpy path;
* otherwise the numba path is used whenever numba imports cleanly.

Both variants stay importable regardless of the switch so the benchmark
(``benchmarks/bench_kernels.py``) and the equivalence tests can compare them
in a single process.
"""

import os

ENV_FLAG = "PIVOTNMT_NO_NUMBA"

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def numba_disabled_by_env() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in ("1", "true", "yes")


JIT_ENABLED = HAS_NUMBA and not numba_disabled_by_env()


def njit(func):
    """Compile ``func`` with numba if available, else return it unchanged.

    fastmath stays off: kernels rely on IEEE semantics (exact zeros from
    ``exp(-inf)``, reproducible summation order).
    """
    if HAS_NUMBA:
        return numba.njit(cache=True, fastmath=False)(func)
    return func
