"""Distance-to-kernel conversion and the low-rank landmark approximation.

The solvers never see raw distances: they operate on a positive
semi-definite RBF kernel, either dense or factored as K ≈ G·Gᵀ. Both forms
answer the same small query interface (multiply, column, diagonal), so a
solver does not need to know which it was handed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .distances import MEASURES, DistanceMatrix, cross_distances
from .errors import AllZeroDistances, EigenFailure, NoConvergence, RankDeficientWarning
from .linalg import sym_eig
from .model import Tractogram, _frozen_array, validate_tractogram

# Above this size the smallest eigenvalue comes from a power iteration
# instead of a full decomposition.
_DENSE_EIG_LIMIT = 4000

_EIG_FLOOR_REL = 1e-10


@dataclass(frozen=True)
class KernelMatrix:
    """RBF kernel over streamlines, dense or as a low-rank factor.

    Exactly one of ``dense_values`` (n×n) and ``factor`` (n×p, K ≈ G·Gᵀ) is
    set. ``shift`` records the spectrum shift folded into the values.
    """

    n: int
    gamma: float
    shift: float = 0.0
    dense_values: np.ndarray | None = None
    factor: np.ndarray | None = None
    landmarks: np.ndarray | None = None

    def __post_init__(self):
        if (self.dense_values is None) == (self.factor is None):
            raise ValueError("exactly one of dense_values and factor must be set")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.dense_values is not None:
            k = np.asarray(self.dense_values, dtype=np.float64)
            if k.shape != (self.n, self.n):
                raise ValueError(f"dense kernel must be ({self.n}, {self.n})")
            scale = max(1.0, np.abs(k).max() if k.size else 0.0)
            if np.abs(k - k.T).max(initial=0.0) > 1e-12 * scale:
                raise ValueError("dense kernel must be symmetric within 1e-12")
            object.__setattr__(self, "dense_values", _frozen_array(k))
        else:
            g = np.asarray(self.factor, dtype=np.float64)
            if g.ndim != 2 or g.shape[0] != self.n:
                raise ValueError(f"factor must have {self.n} rows, got {g.shape}")
            object.__setattr__(self, "factor", _frozen_array(g))
            if self.landmarks is not None:
                object.__setattr__(
                    self,
                    "landmarks",
                    _frozen_array(np.asarray(self.landmarks), dtype=np.int64),
                )

    @property
    def is_factored(self) -> bool:
        return self.factor is not None

    @property
    def rank(self) -> int:
        return self.factor.shape[1] if self.is_factored else self.n

    def matmul(self, x: np.ndarray) -> np.ndarray:
        """K @ x without materializing the dense kernel."""
        if self.is_factored:
            return self.factor @ (self.factor.T @ x)
        return self.dense_values @ x

    def column(self, i: int) -> np.ndarray:
        if self.is_factored:
            return self.factor @ self.factor[i]
        return self.dense_values[:, i].copy()

    def diagonal(self) -> np.ndarray:
        if self.is_factored:
            return np.einsum("ij,ij->i", self.factor, self.factor)
        return np.diagonal(self.dense_values).copy()

    def trace(self) -> float:
        return float(self.diagonal().sum())

    def dense(self) -> np.ndarray:
        """Materialize the full n×n matrix (the one expensive op here)."""
        if self.is_factored:
            return self.factor @ self.factor.T
        return np.asarray(self.dense_values)


def select_gamma(d: DistanceMatrix) -> float:
    """RBF width from the distance distribution: γ = 1/(2·median²).

    Raises AllZeroDistances when every off-diagonal distance is zero, in
    which case no scale can be inferred (callers that want the γ=1 fallback
    should go through :func:`kernel_from_distances`).
    """
    if d.n < 2:
        raise ValueError("need at least 2 streamlines to select gamma")
    off = d.values[~np.eye(d.n, dtype=bool)]
    if not off.any():
        raise AllZeroDistances("all off-diagonal distances are zero")
    sigma = float(np.median(off))
    if sigma == 0.0:
        # Majority of exact duplicates; fall back to the positive entries.
        sigma = float(np.median(off[off > 0]))
    return 1.0 / (2.0 * sigma * sigma)


def rbf_kernel(d: DistanceMatrix, gamma: float) -> KernelMatrix:
    """k(i, j) = exp(−γ·d(i, j)²); dense, no shift applied yet."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    values = np.exp(-gamma * np.square(d.values))
    return KernelMatrix(n=d.n, gamma=float(gamma), shift=0.0, dense_values=values)


def _lambda_min_power(values, tol=1e-6, max_iter=10000, seed=0):
    """Smallest eigenvalue of a symmetric matrix via power iteration on c·I−K.

    c is the row-sum bound on the spectral radius, so c·I−K is PSD and its
    dominant eigenvalue is c − λ_min.
    """
    n = values.shape[0]
    c = float(np.abs(values).sum(axis=1).max())
    if c == 0.0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    prev = None
    for _ in range(max_iter):
        u = c * v - values @ v
        lam = float(v @ u)
        nrm = np.linalg.norm(u)
        if nrm == 0.0:
            return c - lam
        v = u / nrm
        if prev is not None and abs(lam - prev) <= tol * max(1.0, abs(lam)):
            return c - lam
        prev = lam
    raise EigenFailure("power iteration for the smallest eigenvalue stalled")


def _lambda_min(values: np.ndarray) -> float:
    if values.shape[0] <= _DENSE_EIG_LIMIT:
        try:
            w, _ = sym_eig(values)
        except NoConvergence as exc:
            raise EigenFailure(str(exc)) from exc
        return float(w[0])
    return _lambda_min_power(values)


def spectrum_shift(k: KernelMatrix) -> KernelMatrix:
    """Add |λ_min|·I when the kernel is indefinite, recording the shift.

    Only the self-similarities change; this is what licenses reusing the
    unshifted formula for cross-kernel rows against held-out streamlines.
    """
    if k.is_factored:
        raise ValueError("spectrum shift applies to the dense form only")
    lam_min = _lambda_min(np.asarray(k.dense_values))
    if lam_min >= 0.0:
        return k
    shift = -lam_min
    values = np.asarray(k.dense_values) + shift * np.eye(k.n)
    return KernelMatrix(
        n=k.n, gamma=k.gamma, shift=k.shift + shift, dense_values=values
    )


def kernel_from_distances(d: DistanceMatrix, gamma: float | None = None) -> KernelMatrix:
    """Distance matrix to shifted PSD kernel in one step.

    With gamma=None the width is selected from the median distance; if every
    distance is zero a warning is issued and γ falls back to 1.
    """
    if gamma is None:
        try:
            gamma = select_gamma(d)
        except AllZeroDistances:
            warnings.warn(
                "all distances are zero; falling back to gamma=1", stacklevel=2
            )
            gamma = 1.0
    return spectrum_shift(rbf_kernel(d, gamma))


def _nystrom_factor(k_aa: np.ndarray, k_ab: np.ndarray):
    """Low-rank factor rows from the landmark block and the cross block.

    Returns the (p+q)×p factor in landmark-first row order and the number of
    floored eigenvalues.
    """
    w, v = sym_eig(k_aa)
    floor = _EIG_FLOOR_REL * w[-1]
    floored = int((w < floor).sum())
    w = np.maximum(w, floor)
    inv_sqrt = (v / np.sqrt(w)) @ v.T
    top = k_aa @ inv_sqrt
    bottom = k_ab.T @ inv_sqrt
    return np.vstack([top, bottom]), floored


def nystrom_kernel(
    t: Tractogram,
    measure: str = "mcp",
    gamma: float | None = None,
    p: int = 100,
    seed: int = 0,
    threads: int | None = 1,
) -> KernelMatrix:
    """Landmark approximation K ≈ G·Gᵀ without forming the full kernel.

    p landmarks are drawn uniformly at random with the given seed; the
    spectrum shift needed for definiteness is applied to the landmark block
    only, so the p = n case reproduces the dense shifted kernel.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}, expected one of {MEASURES}")
    validate_tractogram(t)
    n = len(t)
    if not 1 <= p <= n:
        raise ValueError(f"landmark count must be in [1, {n}], got {p}")

    rng = np.random.default_rng(seed)
    landmarks = np.sort(rng.choice(n, size=p, replace=False))
    rest = np.setdiff1d(np.arange(n), landmarks)

    t_land = Tractogram(tuple(t[i] for i in landmarks))
    d_aa = cross_distances(t_land, t_land, measure, threads=threads)
    if gamma is None:
        if p < 2:
            gamma = 1.0
        else:
            gamma = select_gamma(DistanceMatrix(n=p, values=d_aa))
    k_aa = np.exp(-gamma * np.square(d_aa))

    shift = 0.0
    lam_min = _lambda_min(k_aa)
    if lam_min < 0.0:
        shift = -lam_min
        k_aa = k_aa + shift * np.eye(p)

    if rest.size:
        t_rest = Tractogram(tuple(t[i] for i in rest))
        d_ab = cross_distances(t_land, t_rest, measure, threads=threads)
        k_ab = np.exp(-gamma * np.square(d_ab))
    else:
        k_ab = np.zeros((p, 0))

    g_blocks, floored = _nystrom_factor(k_aa, k_ab)
    if floored > p / 2:
        warnings.warn(
            f"{floored} of {p} landmark eigenvalues were floored; the "
            "approximation is rank deficient",
            RankDeficientWarning,
            stacklevel=2,
        )
    g = np.empty((n, p))
    g[landmarks] = g_blocks[:p]
    g[rest] = g_blocks[p:]
    return KernelMatrix(
        n=n, gamma=float(gamma), shift=shift, factor=g, landmarks=landmarks
    )
