"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-Python
backend is the fallback.  Set ``DYNMSA_PURE_PYTHON=1`` to force the
pure backend.  Both expose the same four kernels with identical
contracts: ``jacobi_eigh``, ``lloyd``, ``local_move``, ``refine``.
"""

import os
from functools import lru_cache

import numpy as np

from . import _pykernels

if os.environ.get("DYNMSA_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "pure"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "pure"

jacobi_eigh = _impl.jacobi_eigh
lloyd = _impl.lloyd
local_move = _impl.local_move
refine = _impl.refine


def get_backend(name: str):
    """Return a backend module by name ("pure" or "compiled"), or None."""
    if name == "pure":
        return _pykernels
    if name == "compiled":
        try:
            from . import _ckernels

            return _ckernels
        except ImportError:
            return None
    raise ValueError(f"unknown backend {name!r}")


@lru_cache(maxsize=32)
def jacobi_schedule(n: int):
    """Round-robin rotation schedule for an n x n Jacobi sweep.

    Returns flat arrays (pairs_p, pairs_q, offsets); the pairs between
    offsets[r] and offsets[r+1] form one round of disjoint (p, q)
    rotations with p < q, and one full schedule visits every pair
    exactly once.
    """
    m = n if n % 2 == 0 else n + 1
    players = list(range(m))
    pp: list[int] = []
    qq: list[int] = []
    off = [0]
    for _ in range(max(m - 1, 0)):
        for i in range(m // 2):
            x, y = players[i], players[m - 1 - i]
            if x < n and y < n:
                pp.append(min(x, y))
                qq.append(max(x, y))
        off.append(len(pp))
        players = [players[0], players[-1]] + players[1:-1]
    return (
        np.asarray(pp, dtype=np.int64),
        np.asarray(qq, dtype=np.int64),
        np.asarray(off, dtype=np.int64),
    )
