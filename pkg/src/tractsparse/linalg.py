"""Dense linear-algebra substrate for the solvers.

Sizes are modest throughout (dictionary dimension tens, streamline count up
to a few thousand), so everything here is direct dense factorization: no
Krylov methods, no sparsity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    MaxIterations,
    NoConvergence,
    SingularAfterRidge,
    SingularPencil,
    SylvesterFailure,
)

_SYM_TOL = 1e-10


def _require_symmetric(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got {a.shape}")
    scale = max(1.0, np.abs(a).max() if a.size else 0.0)
    if np.abs(a - a.T).max(initial=0.0) > _SYM_TOL * scale:
        raise ValueError(f"{name} must be symmetric within {_SYM_TOL}")
    return a


def _is_symmetric(a: np.ndarray) -> bool:
    scale = max(1.0, np.abs(a).max() if a.size else 0.0)
    return np.abs(a - a.T).max(initial=0.0) <= _SYM_TOL * scale


def sym_eig(a: np.ndarray):
    """Eigendecomposition of a symmetric matrix.

    Returns
    -------
    (w, v) : eigenvalues ascending, orthonormal eigenvectors as columns.
    """
    a = _require_symmetric(a, "matrix")
    try:
        w, v = scipy.linalg.eigh(a)
    except scipy.linalg.LinAlgError as exc:
        raise NoConvergence(f"symmetric eigensolver failed: {exc}") from exc
    return w, v


@dataclass(frozen=True)
class SchurForm:
    """Real Schur decomposition A = Q·T·Qᵀ.

    For symmetric input T is diagonal (the eigendecomposition); otherwise T
    is upper quasi-triangular with 2x2 blocks for complex eigenvalue pairs.
    """

    q: np.ndarray
    t: np.ndarray
    is_diagonal: bool

    @property
    def n(self) -> int:
        return self.t.shape[0]

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues read off the (quasi-)triangular factor."""
        if self.is_diagonal:
            return np.diagonal(self.t).astype(complex)
        return _quasi_triangular_eigvals(self.t)


def _quasi_triangular_eigvals(t: np.ndarray) -> np.ndarray:
    n = t.shape[0]
    vals = np.empty(n, dtype=complex)
    k = 0
    while k < n:
        if k + 1 < n and t[k + 1, k] != 0.0:
            # 2x2 block: eigenvalues from its characteristic polynomial.
            tr = t[k, k] + t[k + 1, k + 1]
            det = t[k, k] * t[k + 1, k + 1] - t[k, k + 1] * t[k + 1, k]
            disc = tr * tr / 4.0 - det
            root = np.sqrt(complex(disc))
            vals[k] = tr / 2.0 + root
            vals[k + 1] = tr / 2.0 - root
            k += 2
        else:
            vals[k] = t[k, k]
            k += 1
    return vals


def schur_form(a: np.ndarray) -> SchurForm:
    """Schur decomposition, using the eigendecomposition when symmetric."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    if _is_symmetric(a):
        w, v = sym_eig(a)
        return SchurForm(q=v, t=np.diag(w), is_diagonal=True)
    try:
        t, q = scipy.linalg.schur(a, output="real")
    except scipy.linalg.LinAlgError as exc:
        raise NoConvergence(f"Schur decomposition failed: {exc}") from exc
    return SchurForm(q=q, t=t, is_diagonal=False)


def _solve_gram(gram, rhs, ridge_scale):
    """Solve gram·z = rhs, escalating a ridge when the subsystem is singular."""
    for ridge in (0.0, 1e-12 * ridge_scale, 1e-8 * ridge_scale):
        try:
            z = np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), rhs)
        except np.linalg.LinAlgError:
            continue
        if np.isfinite(z).all():
            return z
    raise SingularAfterRidge("Gram subsystem is singular even after ridge")


def nnls(gram: np.ndarray, rhs: np.ndarray, max_iter: int | None = None) -> np.ndarray:
    """Minimize wᵀ·Gram·w − 2·rhsᵀ·w subject to w ≥ 0.

    Active-set iteration in the style of Lawson-Hansen, phrased directly on
    the Gram system (the problem sizes here are at most a handful of
    coordinates, so exactness beats speed).
    """
    gram = _require_symmetric(gram, "gram")
    rhs = np.asarray(rhs, dtype=np.float64)
    s = rhs.size
    if gram.shape != (s, s):
        raise ValueError("gram and rhs dimensions disagree")
    if s == 0:
        return np.zeros(0)
    if max_iter is None:
        max_iter = 3 * s + 30
    ridge_scale = max(1.0, np.abs(np.diagonal(gram)).max())
    tol = 1e-12 * max(1.0, np.abs(rhs).max(initial=0.0))

    w = np.zeros(s)
    passive = np.zeros(s, dtype=bool)
    steps = 0
    while True:
        steps += 1
        if steps > max_iter:
            raise MaxIterations("non-negative least squares did not converge")
        grad = rhs - gram @ w
        grad_masked = np.where(passive, -np.inf, grad)
        j = int(np.argmax(grad_masked))
        if grad_masked[j] <= tol:
            return w
        passive[j] = True
        while passive.any():
            steps += 1
            if steps > max_iter:
                raise MaxIterations("non-negative least squares did not converge")
            idx = np.flatnonzero(passive)
            z = _solve_gram(gram[np.ix_(idx, idx)], rhs[idx], ridge_scale)
            if z.min() > 0.0:
                w[:] = 0.0
                w[idx] = z
                break
            # Step toward z until the first passive coordinate hits zero,
            # then retire every coordinate that landed on the bound.
            wp = w[idx]
            bad = z <= 0.0
            denom = wp - z
            ratios = np.full(idx.size, np.inf)
            safe = bad & (denom > 0.0)
            ratios[safe] = wp[safe] / denom[safe]
            ratios[bad & ~safe] = 0.0
            alpha = ratios.min()
            w_new = wp + alpha * (z - wp)
            w_new[ratios <= alpha] = 0.0
            w[idx] = w_new
            drop = idx[w_new <= tol]
            w[drop] = 0.0
            passive[drop] = False


def ridge_solve(a: np.ndarray, b: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Solve (A + ridge·I)·X = B for symmetric A.

    Cholesky first; if the shifted matrix is not positive definite, fall
    back to a symmetric-indefinite (LDLᵀ) solve.
    """
    a = _require_symmetric(a, "matrix")
    b = np.asarray(b, dtype=np.float64)
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    shifted = a + ridge * np.eye(a.shape[0])
    try:
        c = scipy.linalg.cho_factor(shifted, check_finite=False)
        x = scipy.linalg.cho_solve(c, b, check_finite=False)
        if np.isfinite(x).all():
            return x
    except scipy.linalg.LinAlgError:
        pass
    try:
        x = scipy.linalg.solve(shifted, b, assume_a="sym", check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularAfterRidge(f"solve failed after ridge {ridge}: {exc}") from exc
    if not np.isfinite(x).all():
        raise SingularAfterRidge(f"solve produced non-finite values at ridge {ridge}")
    return x


def _pencil_tolerance(ep, eq):
    scale = max(1.0, np.abs(ep).max(initial=0.0), np.abs(eq).max(initial=0.0))
    return 1e-12 * scale


def sylvester_solve(
    p: np.ndarray,
    q: np.ndarray,
    r: np.ndarray,
    schur_q: SchurForm | None = None,
) -> np.ndarray:
    """Solve P·W + W·Q = R by Bartels-Stewart.

    ``schur_q`` lets callers reuse the decomposition of a fixed Q across many
    solves; only P then needs factoring per call.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    m, n = p.shape[0], q.shape[0]
    if p.shape != (m, m) or q.shape != (n, n) or r.shape != (m, n):
        raise ValueError("dimension mismatch between p, q and r")

    sp = schur_form(p)
    sq = schur_q if schur_q is not None else schur_form(q)
    if sq.t.shape[0] != n:
        raise ValueError("precomputed Schur form does not match q")

    ep = sp.eigenvalues()
    eq = sq.eigenvalues()
    gap = np.abs(ep[:, None] + eq[None, :]).min()
    if gap <= _pencil_tolerance(ep, eq):
        raise SingularPencil(
            f"spectra of P and -Q overlap (minimum |λ_P + λ_Q| = {gap:.3e})"
        )

    rt = sp.q.T @ r @ sq.q
    if sp.is_diagonal and sq.is_diagonal:
        lam_p = np.real(ep)
        lam_q = np.real(eq)
        wt = rt / (lam_p[:, None] + lam_q[None, :])
    else:
        wt = _bartels_stewart(sp.t, sq.t, rt)
    w = sp.q @ wt @ sq.q.T
    if not np.isfinite(w).all():
        raise SylvesterFailure("back-substitution produced non-finite values")
    return w


def _bartels_stewart(tp: np.ndarray, tq: np.ndarray, rt: np.ndarray) -> np.ndarray:
    """Back-substitution for upper quasi-triangular tp and tq.

    Works left to right over the column blocks of tq; each block is a 1- or
    2-column solve against (tp + block·I) in Kronecker form.
    """
    m, n = rt.shape
    wt = np.zeros((m, n))
    eye_m = np.eye(m)
    k = 0
    while k < n:
        wide = k + 1 < n and tq[k + 1, k] != 0.0
        cols = slice(k, k + 2) if wide else slice(k, k + 1)
        rhs = rt[:, cols] - wt[:, :k] @ tq[:k, cols]
        block = tq[cols, cols]
        # vec(P·W + W·B = C) with column-major vec: (I⊗P + Bᵀ⊗I)·vec(W) = vec(C)
        width = 2 if wide else 1
        sys = np.kron(np.eye(width), tp) + np.kron(block.T, eye_m)
        try:
            sol = np.linalg.solve(sys, rhs.reshape((m * width,), order="F"))
        except np.linalg.LinAlgError as exc:
            raise SingularPencil(f"singular block at column {k}: {exc}") from exc
        wt[:, cols] = sol.reshape((m, width), order="F")
        k += width
    return wt
