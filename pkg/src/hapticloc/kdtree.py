"""Exact nearest-neighbour k-d tree over 3D points.

Nodes split at the median of their widest axis; leaves hold at most
``leaf_size`` points. Queries are answered in batches: each query first
descends to its home leaf for an upper bound, then a breadth-first sweep
visits every node whose bounding box is not farther than the current best.
Ties in distance resolve to the lowest point index.
"""

from __future__ import annotations

import numpy as np


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a - b
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


class KdTree:
    def __init__(self, points, leaf_size: int = 16):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if len(pts) == 0:
            raise ValueError("cannot build a k-d tree over zero points")
        if leaf_size < 1:
            raise ValueError("leaf_size must be positive")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        pts.setflags(write=False)
        self.points = pts
        self.leaf_size = int(leaf_size)
        self._build()

    def __len__(self) -> int:
        return len(self.points)

    def _build(self) -> None:
        pts = self.points
        perm = np.arange(len(pts))
        lo, hi, left, right, start, stop, dim, split = [], [], [], [], [], [], [], []

        def new_node(s, e):
            sub = pts[perm[s:e]]
            lo.append(sub.min(axis=0))
            hi.append(sub.max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(s)
            stop.append(e)
            dim.append(-1)
            split.append(0.0)
            return len(lo) - 1

        stack = [new_node(0, len(pts))]
        while stack:
            node = stack.pop()
            s, e = start[node], stop[node]
            n = e - s
            if n <= self.leaf_size:
                continue
            axis = int(np.argmax(hi[node] - lo[node]))
            mid = n // 2
            idx = perm[s:e]
            order = np.argpartition(pts[idx, axis], mid)
            perm[s:e] = idx[order]
            dim[node] = axis
            split[node] = pts[perm[s + mid], axis]
            left[node] = new_node(s, s + mid)
            right[node] = new_node(s + mid, e)
            stack.extend((left[node], right[node]))

        self._perm = perm
        self._lo = np.array(lo)
        self._hi = np.array(hi)
        self._left = np.array(left)
        self._right = np.array(right)
        self._dim = np.array(dim)
        self._split = np.array(split)
        leaves = np.flatnonzero(self._left < 0)
        # padded leaf membership table; -1 marks padding
        table = np.full((len(lo), self.leaf_size), -1, dtype=np.int64)
        for node in leaves:
            members = perm[start[node] : stop[node]]
            table[node, : len(members)] = members
        self._members = table

    def _leaf_best(self, qi: np.ndarray, nodes: np.ndarray, queries: np.ndarray):
        """Best (sqdist, index) for each (query, leaf) pair."""
        members = self._members[nodes]
        valid = members >= 0
        cand = self.points[np.where(valid, members, 0)]
        d2 = _sqdist(cand, queries[qi][:, None, :])
        d2 = np.where(valid, d2, np.inf)
        best = d2.min(axis=1)
        tied = d2 == best[:, None]
        idx = np.where(tied & valid, members, np.iinfo(np.int64).max).min(axis=1)
        return best, idx

    @staticmethod
    def _reduce(nq, best_d2, best_idx, qi, d2, idx):
        qs = np.concatenate([np.arange(nq), qi])
        ds = np.concatenate([best_d2, d2])
        ids = np.concatenate([best_idx, idx])
        order = np.lexsort((ids, ds, qs))
        qs, ds, ids = qs[order], ds[order], ids[order]
        first = np.ones(len(qs), dtype=bool)
        first[1:] = qs[1:] != qs[:-1]
        return ds[first], ids[first]

    def query(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Nearest point for each query. Returns (distances, indices)."""
        q = np.asarray(queries, dtype=float)
        single = q.ndim == 1
        q = np.atleast_2d(q)
        if q.shape[1] != 3:
            raise ValueError(f"queries must have shape (m, 3), got {q.shape}")
        nq = len(q)
        allq = np.arange(nq)

        # home leaf gives the initial bound
        node = np.zeros(nq, dtype=np.int64)
        inner = self._left[node] >= 0
        while np.any(inner):
            n = node[inner]
            go_left = q[inner, self._dim[n]] < self._split[n]
            node[inner] = np.where(go_left, self._left[n], self._right[n])
            inner = self._left[node] >= 0
        best_d2, best_idx = self._leaf_best(allq, node, q)
        home = node

        qi, nodes = allq, np.zeros(nq, dtype=np.int64)
        while len(qi):
            gap = np.maximum(self._lo[nodes] - q[qi], 0.0) + np.maximum(q[qi] - self._hi[nodes], 0.0)
            box_d2 = gap[:, 0] * gap[:, 0] + gap[:, 1] * gap[:, 1] + gap[:, 2] * gap[:, 2]
            keep = box_d2 <= best_d2[qi]
            qi, nodes = qi[keep], nodes[keep]
            is_leaf = self._left[nodes] < 0
            leaf_q, leaf_n = qi[is_leaf], nodes[is_leaf]
            revisit = leaf_n == home[leaf_q]
            leaf_q, leaf_n = leaf_q[~revisit], leaf_n[~revisit]
            if len(leaf_q):
                d2, idx = self._leaf_best(leaf_q, leaf_n, q)
                best_d2, best_idx = self._reduce(nq, best_d2, best_idx, leaf_q, d2, idx)
            inner_q, inner_n = qi[~is_leaf], nodes[~is_leaf]
            qi = np.concatenate([inner_q, inner_q])
            nodes = np.concatenate([self._left[inner_n], self._right[inner_n]])

        dist = np.sqrt(best_d2)
        if single:
            return dist[0], best_idx[0]
        return dist, best_idx

