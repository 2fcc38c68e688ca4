"""``BSFLOW_THREADS``: cap on the threads of the linear-algebra backends.

Assembly is serial; only BLAS/LAPACK and OpenMP pools can run in
parallel.  Their sizes are read when the libraries load, so the cap is
applied before numpy is imported and never overrides an explicit setting.
"""

from __future__ import annotations

import os

ENV_VAR = "BSFLOW_THREADS"
BACKEND_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "BLIS_NUM_THREADS")


def thread_cap(environ=None) -> int | None:
    env = os.environ if environ is None else environ
    raw = env.get(ENV_VAR)
    if raw is None or raw.strip() == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}")
    return n


def apply_thread_cap(environ=None) -> int | None:
    env = os.environ if environ is None else environ
    n = thread_cap(env)
    if n is not None:
        for var in BACKEND_VARS:
            env.setdefault(var, str(n))
    return n
