"""Uniform rational grid on the type simplex with barycentric interpolation.

Grid points are the beliefs ``k / r`` with nonnegative integer ``k`` summing
to ``r``.  Interpolation uses the Freudenthal triangulation expressed in the
"tail sum" coordinates ``y_j = r * sum_{i > j} mu_i``, in which the simplex is
the ordered region ``r >= y_0 >= ... >= y_{M-2} >= 0``.  Each query point is
written as a convex combination of the ``M`` vertices of its cell.
"""
from __future__ import annotations

import itertools
from functools import cached_property

import numpy as np


class BeliefGrid:
    def __init__(self, M: int, r: int):
        if M < 1 or r < 1:
            raise ValueError("need M >= 1 and r >= 1")
        self.M = int(M)
        self.r = int(r)
        ys = [y for y in itertools.product(range(r, -1, -1), repeat=M - 1)
              if all(y[i] >= y[i + 1] for i in range(M - 2))]
        ys = np.array(ys, dtype=np.int64).reshape(-1, M - 1)
        codes = self._encode(ys)
        order = np.argsort(codes)
        self._codes = codes[order]
        self._y = ys[order]
        self.points = self._to_belief(self._y)
        self.points.setflags(write=False)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self) -> str:
        return f"BeliefGrid(M={self.M}, r={self.r}, n={len(self)})"

    def _encode(self, y: np.ndarray) -> np.ndarray:
        base = self.r + 1
        weights = base ** np.arange(self.M - 1, dtype=np.int64)
        return y @ weights if self.M > 1 else np.zeros(y.shape[0], dtype=np.int64)

    def _to_belief(self, y: np.ndarray) -> np.ndarray:
        n = y.shape[0]
        upper = np.concatenate([np.full((n, 1), self.r), y], axis=1)
        lower = np.concatenate([y, np.zeros((n, 1), dtype=y.dtype)], axis=1)
        return (upper - lower) / self.r

    def index_of(self, y: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._codes, self._encode(y))

    @cached_property
    def vertex_indices(self) -> np.ndarray:
        """Grid index of each pure belief (type ``i`` certain)."""
        return np.array([self.nearest(np.eye(self.M)[i][None])[0] for i in range(self.M)])

    def locate(self, beliefs) -> tuple:
        """Cell vertices and barycentric weights for each row of ``beliefs``.

        Returns ``(idx, w)`` with shapes ``(n, M)``; weights are nonnegative
        and sum to one, and ``w @ points[idx]`` reproduces the query.
        """
        mu = np.atleast_2d(np.asarray(beliefs, dtype=float))
        n = mu.shape[0]
        if self.M == 1:
            return np.zeros((n, 1), dtype=np.int64), np.ones((n, 1))
        head = np.cumsum(mu[:, :-1], axis=1)
        y = self.r * (1.0 - head)
        y = np.clip(y, 0.0, self.r)
        y = np.minimum.accumulate(y, axis=1)
        base = np.floor(y).astype(np.int64)
        base = np.minimum(base, self.r)
        frac = y - base
        # stable descending sort keeps y_i >= y_j for i < j inside the cell
        order = np.argsort(-frac, axis=1, kind="stable")
        sorted_frac = np.take_along_axis(frac, order, axis=1)
        d = self.M - 1
        verts = np.empty((n, self.M, d), dtype=np.int64)
        verts[:, 0] = base
        cur = base.copy()
        rows = np.arange(n)
        for s in range(d):
            cur = cur.copy()
            cur[rows, order[:, s]] += 1
            verts[:, s + 1] = cur
        w = np.empty((n, self.M))
        w[:, 0] = 1.0 - sorted_frac[:, 0]
        w[:, 1:d] = sorted_frac[:, :-1] - sorted_frac[:, 1:]
        w[:, d] = sorted_frac[:, -1]
        verts = np.minimum(verts, self.r)
        verts = np.minimum.accumulate(verts, axis=2)
        idx = self.index_of(verts.reshape(-1, d)).reshape(n, self.M)
        return idx, w

    def interpolate(self, values: np.ndarray, beliefs) -> np.ndarray:
        idx, w = self.locate(beliefs)
        return (np.asarray(values)[idx] * w).sum(axis=1)

    def nearest(self, beliefs) -> np.ndarray:
        """Index of the cell vertex carrying the largest barycentric weight."""
        idx, w = self.locate(beliefs)
        return idx[np.arange(idx.shape[0]), np.argmax(w, axis=1)]
