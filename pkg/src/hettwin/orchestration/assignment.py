"""Balanced linear assignment with the Hungarian method."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError


def hungarian(cost) -> np.ndarray:
    """Minimum-cost perfect matching of a square matrix; returns the column of each row.

    Shortest augmenting paths with row/column potentials, O(n^3).
    """
    c = np.asarray(cost, dtype=float)
    n = len(c)
    if c.shape != (n, n):
        raise DomainError("hungarian needs a square matrix")
    if not np.all(np.isfinite(c)):
        raise DomainError("cost matrix must be finite")
    if n == 0:
        return np.array([], dtype=int)
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=int)  # match[col] = row, 1-based, 0 = free
    way = np.zeros(n + 1, dtype=int)
    for row in range(1, n + 1):
        match[0] = row
        col0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[col0] = True
            r = match[col0]
            free = ~used[1:]
            cols = np.flatnonzero(free) + 1
            reduced = c[r - 1, cols - 1] - u[r] - v[cols]
            better = reduced < minv[cols]
            minv[cols[better]] = reduced[better]
            way[cols[better]] = col0
            j = cols[np.argmin(minv[cols])]
            delta = minv[j]
            u[match[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            col0 = j
            if match[col0] == 0:
                break
        while col0:
            prev = way[col0]
            match[col0] = match[prev]
            col0 = prev
    assignment = np.empty(n, dtype=int)
    assignment[match[1:] - 1] = np.arange(n)
    return assignment


@dataclass
class AssignmentSolution:
    """Real (row, column) pairs after padding and stripping virtual entities."""

    pairs: list
    total_award: float
    padded_size: int
    n_rows: int
    n_cols: int
    virtual_pairs: int = 0
    blocked_pairs: int = 0
    extra: dict = field(default_factory=dict)

    def column_of(self) -> dict:
        return dict(self.pairs)


def balance_and_assign(awards, margin: float = 1.0) -> AssignmentSolution:
    """Maximum-award one-to-one assignment of a rectangular award matrix.

    ``-inf`` entries are forbidden pairs: they are replaced by a value below
    every real award minus ``margin`` and stripped if the solver is forced
    onto them. The matrix is padded to square with zero-award virtual rows
    and columns, one per real column and row, so any entity can stay
    unmatched at zero award instead of being pushed onto a forbidden pair.
    """
    a = np.asarray(awards, dtype=float)
    if a.ndim != 2:
        raise DomainError("award matrix must be two-dimensional")
    n_rows, n_cols = a.shape
    blocked = ~np.isfinite(a)
    if np.any(np.isnan(a)) or np.any(a == np.inf):
        raise DomainError("awards must be finite or -inf")
    finite = a[~blocked]
    low = min(float(finite.min()) if finite.size else 0.0, 0.0)
    filled = np.where(blocked, low - margin, a)
    n = n_rows + n_cols
    square = np.zeros((n, n))
    square[:n_rows, :n_cols] = filled
    cols = hungarian(square.max() - square) if n else np.array([], dtype=int)
    pairs, total, n_virtual, n_blocked = [], 0.0, 0, 0
    for r, c in enumerate(cols.tolist()):
        if r >= n_rows or c >= n_cols:
            n_virtual += 1
            continue
        if blocked[r, c]:
            n_blocked += 1
            continue
        pairs.append((r, c))
        total += a[r, c]
    return AssignmentSolution(pairs=pairs, total_award=float(total), padded_size=n, n_rows=n_rows, n_cols=n_cols,
                              virtual_pairs=n_virtual, blocked_pairs=n_blocked)


def assign_with_capacity(awards, capacity, margin: float = 1.0) -> AssignmentSolution:
    """Maximum-award assignment where column ``j`` may take up to ``capacity[j]`` rows.

    Each column is replicated once per usable slot (never more than the
    number of rows), which turns the capacitated problem into a plain
    balanced assignment. Rows without a finite option stay unassigned.
    """
    a = np.asarray(awards, dtype=float)
    if a.ndim != 2:
        raise DomainError("award matrix must be two-dimensional")
    n_rows, n_cols = a.shape
    cap = np.asarray(capacity, dtype=int)
    if cap.shape != (n_cols,):
        raise DomainError("one capacity per column is required")
    if (cap < 0).any():
        raise DomainError("capacities must be non-negative")
    copies = np.repeat(np.arange(n_cols), np.minimum(cap, n_rows))
    sol = balance_and_assign(a[:, copies], margin)
    pairs = sorted((r, int(copies[c])) for r, c in sol.pairs)
    return AssignmentSolution(pairs=pairs, total_award=sol.total_award, padded_size=sol.padded_size,
                              n_rows=n_rows, n_cols=n_cols, virtual_pairs=sol.virtual_pairs,
                              blocked_pairs=sol.blocked_pairs, extra={"slot_columns": len(copies)})
