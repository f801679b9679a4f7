"""Pairwise streamline distances and the endpoint-proximity graph.

Three measures, all point-to-vertex (closest sampled point, never a
projection onto a segment):

* ``mcp``  -- mean closest point, symmetrized by averaging both directions
* ``haus`` -- Hausdorff, symmetrized by taking the larger direction
* ``ep``   -- endpoints only, averaged over endpoints and both directions

Every entry of a distance matrix is computed independently, so assembly can
be parallelized over rows without changing a single bit of the result.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateStreamline, NonFiniteCoordinate
from .model import Streamline, Tractogram, _frozen_array, validate_tractogram

MEASURES = ("mcp", "haus", "ep")

DEFAULT_ENDPOINT_THRESHOLD_MM = 7.0


@dataclass(frozen=True)
class DistanceMatrix:
    """Dense symmetric matrix of pairwise streamline distances in mm."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.n, self.n):
            raise ValueError(f"values must be ({self.n}, {self.n}), got {vals.shape}")
        if not np.isfinite(vals).all():
            raise ValueError("distance matrix contains non-finite values")
        if vals.size and vals.min() < 0:
            raise ValueError("distance matrix contains negative values")
        if np.any(np.diagonal(vals) != 0.0):
            raise ValueError("distance matrix diagonal must be exactly zero")
        if not np.array_equal(vals, vals.T):
            raise ValueError("distance matrix must be symmetric")
        object.__setattr__(self, "values", _frozen_array(vals))


@dataclass(frozen=True)
class EndpointGraph:
    """Binary graph connecting streamlines with nearby endpoints."""

    adjacency: np.ndarray
    threshold_mm: float
    degree: np.ndarray = field(init=False)

    def __post_init__(self):
        adj = np.asarray(self.adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        adj = adj.astype(np.uint8)
        if np.any(np.diagonal(adj) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if self.threshold_mm <= 0:
            raise ValueError("threshold_mm must be positive")
        object.__setattr__(self, "adjacency", _frozen_array(adj, dtype=np.uint8))
        object.__setattr__(
            self, "degree", _frozen_array(adj.sum(axis=1), dtype=np.int64)
        )

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]


def _check_streamline(s: Streamline, name: str) -> None:
    if len(s) < 2:
        raise DegenerateStreamline(f"{name} has {len(s)} point(s)")
    if not np.isfinite(s.points).all():
        raise NonFiniteCoordinate(f"{name} has a non-finite coordinate")


def _directed_mean(pa: np.ndarray, pb: np.ndarray) -> float:
    # Plain sequential accumulation, so the scalar path agrees bitwise with
    # the row-at-a-time matrix assembly (axis-0 reduce accumulates in order).
    mins = cdist(pa, pb).min(axis=1)
    total = 0.0
    for v in mins:
        total += v
    return total / mins.size


def dist_mcp(a: Streamline, b: Streamline) -> float:
    """Mean-closest-point distance, averaged over both directions.

    Each direction takes, for every point of one streamline, the distance to
    the nearest sampled point of the other, and averages those minima.
    """
    _check_streamline(a, "first streamline")
    _check_streamline(b, "second streamline")
    d_ab = _directed_mean(a.points, b.points)
    d_ba = _directed_mean(b.points, a.points)
    return float((d_ab + d_ba) / 2.0)


def dist_hausdorff(a: Streamline, b: Streamline) -> float:
    """Symmetric Hausdorff distance: the worst closest-point distance."""
    _check_streamline(a, "first streamline")
    _check_streamline(b, "second streamline")
    d_ab = cdist(a.points, b.points).min(axis=1).max()
    d_ba = cdist(b.points, a.points).min(axis=1).max()
    return float(max(d_ab, d_ba))


def dist_ep(a: Streamline, b: Streamline) -> float:
    """Endpoint distance: closest-endpoint matching, averaged both ways.

    Only the first and last point of each streamline participate, so two
    streamlines sharing endpoints are at distance 0 regardless of interior
    shape.
    """
    _check_streamline(a, "first streamline")
    _check_streamline(b, "second streamline")
    m = cdist(a.endpoints, b.endpoints)
    d_ab = (m[0].min() + m[1].min()) / 2.0
    d_ba = (m[:, 0].min() + m[:, 1].min()) / 2.0
    return float((d_ab + d_ba) / 2.0)


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("TRACTSPARSE_THREADS", "1") or "1")
    return max(1, int(threads))


def _directed_rows(points, all_points, starts, measure, lo, hi):
    """Directed distances streamline i -> every streamline, rows lo..hi."""
    out = np.empty((hi - lo, starts.size))
    for k, i in enumerate(range(lo, hi)):
        d = cdist(points[i], all_points)
        mins = np.minimum.reduceat(d, starts, axis=1)
        if measure == "haus":
            out[k] = mins.max(axis=0)
        else:
            # Row-order accumulation; matches a sequential per-pair loop.
            out[k] = np.add.reduce(mins, axis=0) / mins.shape[0]
    return out


def pairwise_distances(
    t: Tractogram, measure: str = "mcp", threads: int | None = 1
) -> DistanceMatrix:
    """All pairwise distances under one measure.

    Parameters
    ----------
    t : Tractogram
    measure : {"mcp", "haus", "ep"}
    threads : int or None
        Worker threads for row assembly. None reads TRACTSPARSE_THREADS
        (default 1). The result is bitwise identical for any thread count.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}, expected one of {MEASURES}")
    validate_tractogram(t)
    threads = _resolve_threads(threads)
    n = len(t)

    if measure == "ep":
        points = [s.endpoints for s in t]
    else:
        points = [s.points for s in t]
    counts = np.array([p.shape[0] for p in points])
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    all_points = np.concatenate(points)

    directed = np.empty((n, n))
    if threads == 1 or n < 2 * threads:
        directed[:] = _directed_rows(points, all_points, starts, measure, 0, n)
    else:
        block = max(1, -(-n // (threads * 8)))
        bounds = [(lo, min(lo + block, n)) for lo in range(0, n, block)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(
                lambda b: _directed_rows(points, all_points, starts, measure, *b),
                bounds,
            )
            for (lo, hi), part in zip(bounds, parts):
                directed[lo:hi] = part

    if measure == "haus":
        values = np.maximum(directed, directed.T)
    else:
        values = (directed + directed.T) / 2.0
    return DistanceMatrix(n=n, values=values)


def cross_distances(
    a: Tractogram, b: Tractogram, measure: str = "mcp", threads: int | None = 1
) -> np.ndarray:
    """Rectangular distance block between two streamline sets.

    Entry (i, j) is the same symmetrized measure ``pairwise_distances`` uses,
    so ``cross_distances(t, t)`` equals the square matrix bit for bit.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}, expected one of {MEASURES}")
    validate_tractogram(a)
    validate_tractogram(b)
    threads = _resolve_threads(threads)
    na, nb = len(a), len(b)

    if measure == "ep":
        pts_a = [s.endpoints for s in a]
        pts_b = [s.endpoints for s in b]
    else:
        pts_a = [s.points for s in a]
        pts_b = [s.points for s in b]

    def directed(points_src, points_tgt):
        counts = np.array([p.shape[0] for p in points_tgt])
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        tgt = np.concatenate(points_tgt)
        n_src = len(points_src)
        out = np.empty((n_src, len(points_tgt)))
        if threads == 1 or n_src < 2 * threads:
            out[:] = _directed_rows(points_src, tgt, starts, measure, 0, n_src)
            return out
        block = max(1, -(-n_src // (threads * 8)))
        bounds = [(lo, min(lo + block, n_src)) for lo in range(0, n_src, block)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(
                lambda bo: _directed_rows(points_src, tgt, starts, measure, *bo),
                bounds,
            )
            for (lo, hi), part in zip(bounds, parts):
                out[lo:hi] = part
        return out

    d_ab = directed(pts_a, pts_b)
    d_ba = directed(pts_b, pts_a)
    if measure == "haus":
        return np.maximum(d_ab, d_ba.T)
    return (d_ab + d_ba.T) / 2.0


def build_endpoint_graph(
    t: Tractogram, threshold_mm: float = DEFAULT_ENDPOINT_THRESHOLD_MM
) -> EndpointGraph:
    """Connect streamline pairs whose closest endpoints lie under a threshold.

    Edge rule: the minimum over the four endpoint pairings of (i, j) must be
    strictly below ``threshold_mm``. Self-loops are never added.
    """
    if threshold_mm <= 0:
        raise ValueError("threshold_mm must be positive")
    validate_tractogram(t)
    n = len(t)
    eps = np.concatenate([s.endpoints for s in t])
    starts = np.arange(0, 2 * n, 2)

    adj = np.zeros((n, n), dtype=np.uint8)
    for i in range(n):
        d = cdist(t[i].endpoints, eps)
        nearest = np.minimum.reduceat(d, starts, axis=1).min(axis=0)
        adj[i] = nearest < threshold_mm
    np.fill_diagonal(adj, 0)
    return EndpointGraph(adjacency=adj, threshold_mm=float(threshold_mm))


def graph_laplacian(g: EndpointGraph) -> np.ndarray:
    """Combinatorial Laplacian: degree matrix minus adjacency."""
    adj = g.adjacency.astype(np.float64)
    return np.diag(adj.sum(axis=1)) - adj
