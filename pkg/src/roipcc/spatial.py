"""Exact nearest-neighbour search.

A ``cKDTree`` proposes candidates; squared distances are then recomputed as
``dx*dx + dy*dy + dz*dz`` in float64 and ties are broken by the smallest
point index, so answers match a brute-force scan bit for bit.  When the
candidate window cannot rule out further ties, it is widened.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

_REL_MARGIN = 1e-9
_ABS_MARGIN = 1e-12


def squared_distances(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Per-axis difference, square, sum (x, y, z order); broadcasts."""
    d = queries - points
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


class SpatialIndex:
    """Immutable search structure over a fixed point set."""

    def __init__(self, points):
        pts = np.array(points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise ValueError("cannot index an empty point set")
        pts.setflags(write=False)
        self.points = pts
        self._tree = cKDTree(pts, balanced_tree=True, compact_nodes=True)
        self.lo = pts.min(axis=0)
        self.hi = pts.max(axis=0)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.size

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo, self.hi

    def nearest(self, query) -> tuple[int, float]:
        idx, d2 = self.nearest_many(np.asarray(query, dtype=np.float64).reshape(1, 3))
        return int(idx[0]), float(d2[0])

    def knn(self, query, k: int) -> list[tuple[int, float]]:
        idx, d2 = self.knn_many(np.asarray(query, dtype=np.float64).reshape(1, 3), k)
        return [(int(i), float(d)) for i, d in zip(idx[0], d2[0])]

    def nearest_many(self, queries) -> tuple[np.ndarray, np.ndarray]:
        idx, d2 = self.knn_many(queries, 1)
        return idx[:, 0], d2[:, 0]

    def knn_many(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        """k nearest points for every query row, ascending by (distance, index)."""
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        n = self.size
        if k < 1 or k > n:
            raise ValueError(f"k must lie in [1, {n}], got {k}")
        out_idx = np.empty((q.shape[0], k), dtype=np.int64)
        out_d2 = np.empty((q.shape[0], k), dtype=np.float64)
        pending = np.arange(q.shape[0])
        window = min(n, k + 2)
        while pending.size:
            pending = self._resolve(q[pending], k, window, out_idx, out_d2, pending)
            if window == n:
                break
            window = min(n, window * 4)
        return out_idx, out_d2

    def _resolve(self, q, k, window, out_idx, out_d2, rows):
        approx, cand = self._tree.query(q, k=window)
        approx = approx.reshape(len(q), window)
        cand = cand.reshape(len(q), window)
        exact = squared_distances(q[:, None, :], self.points[cand])
        order = np.lexsort((cand, exact), axis=-1)
        cand = np.take_along_axis(cand, order, axis=1)
        exact = np.take_along_axis(exact, order, axis=1)
        if window == self.size:
            ok = np.ones(len(q), dtype=bool)
        else:
            # Any point outside the window is at least as far as the last
            # candidate; demand a clear gap from the k-th distance.
            kth = approx[:, k - 1] ** 2
            last = approx[:, -1] ** 2
            ok = last > kth * (1 + _REL_MARGIN) + _ABS_MARGIN
        done = rows[ok]
        out_idx[done] = cand[ok, :k]
        out_d2[done] = exact[ok, :k]
        return rows[~ok]


def build_index(points) -> SpatialIndex:
    return SpatialIndex(points)

