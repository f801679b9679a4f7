"""Domain types shared by every stage of the pipeline.

All coordinates and solver arithmetic are 64-bit. Types are immutable after
construction (arrays are marked read-only), so values can be shared freely
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateStreamline,
    EmptyTractogram,
    NonFiniteCoordinate,
)


def _frozen_array(values, dtype=np.float64):
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Streamline:
    """An ordered 3D polyline, coordinates in millimeters.

    Points are stored as an (n_points, 3) float64 array. Consecutive points
    need not be equidistant; no resampling is assumed anywhere downstream.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"streamline points must be (n, 3), got {pts.shape}")
        object.__setattr__(self, "points", _frozen_array(pts))

    def __len__(self):
        return self.points.shape[0]

    @property
    def endpoints(self) -> np.ndarray:
        """The first and last point, shape (2, 3)."""
        return self.points[[0, -1]]


@dataclass(frozen=True)
class Tractogram:
    """A collection of streamlines, typically one subject's tractography."""

    streamlines: tuple
    subject_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "streamlines", tuple(self.streamlines))

    def __len__(self):
        return len(self.streamlines)

    def __iter__(self):
        return iter(self.streamlines)

    def __getitem__(self, i) -> Streamline:
        return self.streamlines[i]


@dataclass(frozen=True)
class Labeling:
    """Cluster indices in [0, m) for each streamline of a tractogram."""

    labels: np.ndarray
    m: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if lab.size and (lab.min() < 0 or lab.max() >= self.m):
            raise ValueError(f"labels must lie in [0, {self.m})")
        object.__setattr__(self, "labels", _frozen_array(lab, dtype=np.int64))

    def __len__(self):
        return self.labels.size


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver settings.

    ``t_outer`` left at None means each solver applies its own default
    (100 sweeps for kernel k-means, 20 for the sparse solver, 30 for the
    ADMM solvers). ``lambda2``
    at None triggers the scale-aware default described in
    :func:`tractsparse.solvers.default_lambda2`.
    """

    m: int
    s_max: int = 3
    lambda1: float = 0.001
    lambda2: float | None = None
    lambda_l: float = 0.0
    mu: float = 0.01
    t_inner: int = 200
    t_outer: int | None = None
    eps_primal: float = 1e-4
    seed: int = 0
    ridge: float = 1e-8

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.s_max < 1:
            raise ValueError("s_max must be >= 1")
        if self.mu <= 0:
            raise ValueError("mu must be > 0")
        if self.eps_primal <= 0:
            raise ValueError("eps_primal must be > 0")
        if self.lambda1 < 0 or self.lambda_l < 0:
            raise ValueError("trade-off weights must be non-negative")
        if self.lambda2 is not None and self.lambda2 < 0:
            raise ValueError("trade-off weights must be non-negative")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")


def validate_tractogram(t: Tractogram) -> None:
    """Check tractogram invariants, raising a ``DataError`` subclass on violation.

    Raises:
        EmptyTractogram: no streamlines at all.
        DegenerateStreamline: a streamline with fewer than 2 points.
        NonFiniteCoordinate: any NaN or infinite coordinate.
    """
    if len(t) == 0:
        raise EmptyTractogram("tractogram contains no streamlines")
    for i, s in enumerate(t):
        if len(s) < 2:
            raise DegenerateStreamline(f"streamline {i} has {len(s)} point(s)")
        if not np.isfinite(s.points).all():
            raise NonFiniteCoordinate(f"streamline {i} has a non-finite coordinate")
