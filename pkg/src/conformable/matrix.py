"""Matrix Mittag-Leffler functions and spectral splittings.

All matrix norms are the column-sum norm ``max_j sum_i |a_ij|``, i.e. the
operator norm induced by the vector 1-norm.  :func:`col_norm` and
:func:`vec_norm` are the only norms used anywhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .calculus import OrderLike, as_order, ml_scalar
from .exceptions import NonHyperbolicError

__all__ = [
    "SpectralSplit",
    "col_norm",
    "vec_norm",
    "as_square",
    "ml_matrix",
    "ml_series",
    "ml_jordan_block",
    "spectral_projection",
    "negative_spectrum_bound",
    "ml_scalar_diag",
]


def col_norm(A) -> float:
    """Column-sum norm of a matrix."""
    return float(np.linalg.norm(np.atleast_2d(A), 1))


def vec_norm(x) -> float:
    """Vector 1-norm, the norm inducing :func:`col_norm`."""
    return float(np.sum(np.abs(x)))


def as_square(A) -> np.ndarray:
    A = np.array(A, dtype=float, ndmin=2)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def ml_matrix(order: OrderLike, A, t: float) -> np.ndarray:
    """``E_alpha(A, t)``: ``expm(A t**alpha/alpha)`` for ``t >= 0``, mirrored for ``t < 0``.

    Both branches equal ``expm(A * clock(t))``; scipy's scaling-and-squaring
    Pade exponential does the work.
    """
    order = as_order(order)
    A = as_square(A)
    with np.errstate(over="ignore", invalid="ignore"):
        out = linalg.expm(A * order.clock(t))
    if not np.all(np.isfinite(out)):
        raise OverflowError(f"E_alpha(A, {t}) overflows")
    return out


def ml_series(order: OrderLike, A, t: float, terms: int = 200) -> np.ndarray:
    """Truncated power series ``sum_k A^k |t|^(alpha k) / (alpha^k k!)``.

    Independent of :func:`ml_matrix`; intended as a check for moderate
    ``||A|| |t|^alpha / alpha``.  Negative ``t`` uses ``-A``.
    """
    order = as_order(order)
    A = as_square(A)
    z = abs(order.clock(t))
    M = A if t >= 0 else -A
    term = np.eye(A.shape[0])
    total = term.copy()
    for k in range(1, terms):
        term = term @ M * (z / k)
        total += term
        if col_norm(term) < 1e-17 * max(1.0, col_norm(total)):
            break
    return total


def ml_jordan_block(order: OrderLike, lam: float, size: int, t: float = 1.0) -> np.ndarray:
    """Closed form of ``E_alpha(lam I + N, t)`` for the nilpotent shift ``N``.

    ``E_alpha(lam, t) * sum_{j<size} N^j u^j / j!`` with ``u = clock(t)``; at the
    default ``t = 1`` the coefficients are ``1/(alpha^j j!)``.
    """
    order = as_order(order)
    if size < 1:
        raise ValueError("Jordan block size must be >= 1")
    u = order.clock(t)
    out = np.zeros((size, size))
    for j in range(size):
        out += np.eye(size, k=j) * (u ** j / math.factorial(j))
    return math.exp(lam * u) * out


@dataclass(frozen=True)
class SpectralSplit:
    """Projection onto the stable invariant subspace and the rates around it."""

    stable_projection: np.ndarray
    stable_rate: float
    unstable_rate: float
    stable_rank: int
    eigenvalues: np.ndarray

    @property
    def P(self) -> np.ndarray:
        return self.stable_projection


def spectral_projection(A, tol: float = 1e-8) -> SpectralSplit:
    """Spectral projection onto eigenvalues with negative real part.

    The projection is taken along the complementary invariant subspace, so it
    commutes with ``A``.  It is assembled from a real Schur form sorted with
    the stable block first and a Sylvester solve that decouples the blocks.

    Raises
    ------
    NonHyperbolicError
        If some eigenvalue has ``|Re| < tol``.
    """
    A = as_square(A)
    n = A.shape[0]
    eig = np.linalg.eigvals(A)
    if np.any(np.abs(eig.real) < tol):
        raise NonHyperbolicError(
            f"eigenvalue within {tol:g} of the imaginary axis: {eig[np.abs(eig.real) < tol]}")
    T, Z, k = linalg.schur(A, output="real", sort="lhp")
    block = np.zeros((n, n))
    block[:k, :k] = np.eye(k)
    if 0 < k < n:
        X = linalg.solve_sylvester(T[:k, :k], -T[k:, k:], -T[:k, k:])
        block[:k, k:] = -X
    # a trivial split is exact; Z @ Z.T would leave roundoff in the empty block
    P = np.eye(n) if k == n else np.zeros((n, n)) if k == 0 else Z @ block @ Z.T
    stable = eig.real[eig.real < 0]
    unstable = eig.real[eig.real > 0]
    return SpectralSplit(
        stable_projection=P,
        stable_rate=float(np.min(-stable)) if stable.size else math.inf,
        unstable_rate=float(np.min(unstable)) if unstable.size else math.inf,
        stable_rank=int(k),
        eigenvalues=eig,
    )


def negative_spectrum_bound(order: OrderLike, A, t_grid, margin: float = 1e-6):
    """Certified pair ``(K, lam)`` with ``||E_alpha(A,t)|| <= K E_alpha(-lam,t)`` on ``t_grid``.

    ``lam`` is the spectral abscissa gap ``min |Re eig|`` reduced by
    ``margin``; ``K`` is the grid supremum of ``||E_alpha(A,t)|| E_alpha(lam,t)``.
    """
    order = as_order(order)
    A = as_square(A)
    eig = np.linalg.eigvals(A)
    if np.any(eig.real >= 0):
        raise ValueError("negative_spectrum_bound needs every eigenvalue in Re < 0")
    ts = np.asarray(t_grid, dtype=float)
    if ts.size == 0 or np.any(ts < 0):
        raise ValueError("t_grid must be a nonempty subset of [0, inf)")
    lam = float(np.min(-eig.real)) - margin
    K = max(col_norm(ml_matrix(order, A, t)) * math.exp(lam * order.clock(t)) for t in ts)
    return K, lam


def ml_scalar_diag(order: OrderLike, diag, t: float) -> np.ndarray:
    """``E_alpha(diag(d), t)`` entrywise; handy reference for diagonal systems."""
    return np.diag([ml_scalar(order, d, t) for d in diag])
