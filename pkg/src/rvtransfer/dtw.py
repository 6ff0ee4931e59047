"""Multivariate dynamic time warping.

Distance between two sequences of p-dimensional points under the classic
boundary / monotonicity / continuity path constraints, with unsquared
Euclidean local cost. `dtw_distance` is the production DP kernel;
`brute_force_dtw` exhaustively enumerates warping paths and exists purely
as a test oracle for small instances.

Both routines consume the same cost matrix and accumulate path costs
left-to-right, so on identical inputs they agree bitwise.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .errors import ValidationError

# N*M above this, path enumeration explodes; the oracle refuses.
BRUTE_FORCE_CELL_LIMIT = 36


def _as_points(seq, name: str) -> np.ndarray:
    """Coerce a sequence to an (n, p) float array, validating shape and finiteness."""
    arr = np.asarray(seq, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValidationError(f"{name}: expected a sequence of points, got ndim={arr.ndim}")
    if arr.shape[0] == 0:
        raise ValidationError(f"{name}: empty sequence")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name}: non-finite coordinates")
    return arr


def local_cost(a, b) -> float:
    """Euclidean distance between two equal-dimension points."""
    av = np.asarray(a, dtype=float).ravel()
    bv = np.asarray(b, dtype=float).ravel()
    if av.shape != bv.shape:
        raise ValidationError(f"point dimension mismatch: {av.shape[0]} vs {bv.shape[0]}")
    d = av - bv
    return float(np.sqrt(np.sum(d * d)))


def _cost_matrix(t_pts: np.ndarray, s_pts: np.ndarray) -> np.ndarray:
    diff = t_pts[:, None, :] - s_pts[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def _validated_pair(t_seq, s_seq) -> tuple[np.ndarray, np.ndarray]:
    t_pts = _as_points(t_seq, "T")
    s_pts = _as_points(s_seq, "S")
    if t_pts.shape[1] != s_pts.shape[1]:
        raise ValidationError(
            f"point dimension mismatch: {t_pts.shape[1]} vs {s_pts.shape[1]}"
        )
    return t_pts, s_pts


def dtw_distance(t_seq, s_seq) -> float:
    """Minimum cumulative alignment cost between two sequences.

    Standard DP recurrence D(n,m) = C(n,m) + min(D(n-1,m-1), D(n-1,m), D(n,m-1))
    with two-row rolling storage. No global band constraint.
    """
    t_pts, s_pts = _validated_pair(t_seq, s_seq)
    cost = _cost_matrix(t_pts, s_pts).tolist()
    n = len(cost)
    m = len(cost[0])

    prev: list[float] = []
    for i in range(n):
        row = cost[i]
        cur = [0.0] * m
        if i == 0:
            cur[0] = row[0]
            for j in range(1, m):
                cur[j] = cur[j - 1] + row[j]
        else:
            cur[0] = prev[0] + row[0]
            for j in range(1, m):
                best = prev[j - 1]
                if prev[j] < best:
                    best = prev[j]
                if cur[j - 1] < best:
                    best = cur[j - 1]
                cur[j] = best + row[j]
        prev = cur
    return prev[m - 1]


def enumerate_warping_paths(n: int, m: int) -> Iterator[tuple[tuple[int, int], ...]]:
    """Yield every admissible warping path through an n x m grid (0-based cells).

    Paths start at (0, 0), end at (n-1, m-1), and step by (1,1), (1,0) or (0,1).
    """
    stack: list[tuple[tuple[int, int], ...]] = [((0, 0),)]
    while stack:
        path = stack.pop()
        i, j = path[-1]
        if i == n - 1 and j == m - 1:
            yield path
            continue
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni < n and nj < m:
                stack.append(path + ((ni, nj),))


def is_admissible_path(path, n: int, m: int) -> bool:
    """Check the boundary, monotonicity and continuity conditions on a path."""
    if not path or path[0] != (0, 0) or path[-1] != (n - 1, m - 1):
        return False
    for (i0, j0), (i1, j1) in zip(path, path[1:]):
        if (i1 - i0, j1 - j0) not in ((1, 1), (1, 0), (0, 1)):
            return False
    return True


def brute_force_dtw(t_seq, s_seq) -> float:
    """Exhaustive-minimum path cost; test oracle for instances with N*M <= 36."""
    t_pts, s_pts = _validated_pair(t_seq, s_seq)
    n, m = t_pts.shape[0], s_pts.shape[0]
    if n * m > BRUTE_FORCE_CELL_LIMIT:
        raise ValidationError(
            f"brute_force_dtw refuses N*M={n * m} > {BRUTE_FORCE_CELL_LIMIT}"
        )
    cost = _cost_matrix(t_pts, s_pts).tolist()
    best = float("inf")
    for path in enumerate_warping_paths(n, m):
        acc = 0.0
        for i, j in path:
            acc = acc + cost[i][j]
        if acc < best:
            best = acc
    return best
