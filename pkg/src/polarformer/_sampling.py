"""Bilinear gathering on dense ``(rows, cols, ...)`` grids at continuous indices."""

from __future__ import annotations

import numpy as np


def bilinear_at_index(grid, col, row):
    """Sample ``grid[row, col]`` bilinearly; indices are clamped to the grid.

    ``col`` and ``row`` are broadcastable arrays of continuous indices.  Any
    trailing axes of ``grid`` beyond the first two are carried through.
    """
    rows, cols = grid.shape[:2]
    col = np.clip(np.asarray(col, dtype=np.float64), 0.0, cols - 1)
    row = np.clip(np.asarray(row, dtype=np.float64), 0.0, rows - 1)
    c0 = np.floor(col).astype(np.intp)
    r0 = np.floor(row).astype(np.intp)
    c1 = np.minimum(c0 + 1, cols - 1)
    r1 = np.minimum(r0 + 1, rows - 1)
    fc = col - c0
    fr = row - r0
    extra = (np.newaxis,) * (grid.ndim - 2)
    fc = fc[(...,) + extra]
    fr = fr[(...,) + extra]
    top = grid[r0, c0] * (1.0 - fc) + grid[r0, c1] * fc
    bottom = grid[r1, c0] * (1.0 - fc) + grid[r1, c1] * fc
    return top * (1.0 - fr) + bottom * fr
