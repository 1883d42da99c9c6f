"""Dense-box helpers for dynamic programs over (vertex, translation) states."""
from __future__ import annotations

import numpy as np


def clipped_slices(shape: tuple[int, ...], lo: np.ndarray, hi: np.ndarray, shift: np.ndarray):
    """Source/destination slices moving the box [lo, hi] by ``shift``, clipped to ``shape``.

    Returns ``None`` when nothing of the shifted box remains inside.
    """
    src, dst = [], []
    for n, a, b, s in zip(shape, lo, hi, shift):
        a2, b2 = max(a, -s), min(b, n - 1 - s)
        if a2 > b2:
            return None
        src.append(slice(a2, b2 + 1))
        dst.append(slice(a2 + s, b2 + s + 1))
    return tuple(src), tuple(dst)


def box_bounds(active: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Tight inclusive bounds of the nonzero cells of ``active`` (any leading axes)."""
    if not active.any():
        return None
    d = active.ndim
    lo, hi = [], []
    for ax in range(d):
        other = tuple(i for i in range(d) if i != ax)
        nz = np.flatnonzero(active.any(axis=other) if other else active)
        lo.append(nz[0])
        hi.append(nz[-1])
    return np.array(lo), np.array(hi)
