"""Spectral calculus for Hermitian matrices.

All functions operate on complex arrays of shape ``(..., m, m)`` and are
vectorised over the leading dimensions, so a field of matrices sampled on a
grid can be processed in one call.  Every spectral function funnels through a
single eigendecomposition routine (:func:`eigh_hermitian`) which symmetrises
its input first; this gives the whole package one consistent policy for
numerical noise.

The two central operations are the order-scrambled product

    M_C(Delta) = int_0^1 C^(1-tau) Delta C^tau dtau

for a positive definite ``C`` and Hermitian ``Delta``, and its inverse
``M_C^{-1}``.  In the eigenbasis of ``C`` (eigenvalues ``c_i``) the map is
entrywise multiplication by

    f_ij = (c_i - c_j) / (log c_i - log c_j),      f_ii = c_i,

which is also the first divided difference of the exponential evaluated at
``log c``.  These maps are exactly the Frechet derivatives of the matrix
exponential and logarithm:

    d/ds exp(A + s Delta)|_0 = M_{exp A}(Delta)
    d/ds log(A + s Delta)|_0 = M_A^{-1}(Delta)      (A positive definite).
"""

from __future__ import annotations

import numpy as np

from .errors import PositivityError

# Relative eigenvalue gap below which the divided-difference factor switches
# to its Taylor series; keeps f smooth through coalescing eigenvalues.
_SERIES_CUTOFF = 1e-4


def hermitian_part(matrix: np.ndarray) -> np.ndarray:
    """Return (M + M*)/2, batched over leading dimensions."""
    a = np.asarray(matrix)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def hermitian_defect(matrix: np.ndarray) -> float:
    """Frobenius norm of the anti-Hermitian part, maximised over the batch."""
    a = np.asarray(matrix)
    skew = 0.5 * (a - np.conj(np.swapaxes(a, -1, -2)))
    return float(np.max(np.sqrt(np.sum(np.abs(skew) ** 2, axis=(-2, -1)))) if a.size else 0.0)


def as_hermitian(matrix: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Validate that ``matrix`` is Hermitian up to ``rtol`` and symmetrise it.

    The defect ||M - M*||_F must not exceed ``rtol * ||M||_F`` (per batch
    entry); otherwise the input is rejected rather than silently repaired.
    """
    a = np.asarray(matrix, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    defect = np.sqrt(np.sum(np.abs(a - np.conj(np.swapaxes(a, -1, -2))) ** 2, axis=(-2, -1)))
    scale = np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))
    if np.any(defect > rtol * np.maximum(scale, 1e-300)):
        raise ValueError(
            "matrix is not Hermitian: defect %.3e exceeds %.1e relative" % (float(np.max(defect)), rtol)
        )
    return hermitian_part(a)


def eigh_hermitian(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition after symmetrisation; the shared spectral entry point.

    Returns ``(w, u)`` with ascending real eigenvalues ``w`` of shape
    ``(..., m)`` and unitary ``u`` such that ``M = u diag(w) u*``.  Inputs with
    ``m == 1`` short-circuit to a scalar path, which keeps large sampled fields
    of 1x1 matrices cheap.
    """
    a = np.asarray(matrix, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    if a.shape[-1] == 1:
        w = a.real[..., 0]
        u = np.ones_like(a)
        return w, u
    return np.linalg.eigh(hermitian_part(a))


def matrix_exp(matrix: np.ndarray) -> np.ndarray:
    """Hermitian matrix exponential ``u diag(exp w) u*``."""
    w, u = eigh_hermitian(matrix)
    return _rebuild(np.exp(w), u)


def matrix_log(matrix: np.ndarray, floor: float | None = None) -> np.ndarray:
    """Principal logarithm of a positive definite Hermitian matrix.

    Raises :class:`PositivityError` when any eigenvalue is at or below the
    positivity floor (default ``1e-12 * max|eig|`` per matrix).
    """
    w, u = eigh_hermitian(matrix)
    _check_positive(w, floor)
    return _rebuild(np.log(w), u)


def assert_positive_definite(matrix: np.ndarray, floor: float | None = None) -> float:
    """Check positive definiteness; return the smallest eigenvalue over the batch.

    Succeeds iff min-eig strictly exceeds ``floor`` (default relative floor
    ``1e-12 * max|eig|``); otherwise raises :class:`PositivityError` carrying
    the offending eigenvalue.
    """
    w, _ = eigh_hermitian(matrix)
    _check_positive(w, floor)
    return float(np.min(w))


def scrambled_multiply(c: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Order-scrambled product M_C(Delta) = int_0^1 C^(1-tau) Delta C^tau dtau.

    ``c`` must be positive definite Hermitian, ``delta`` Hermitian; the result
    is Hermitian, and positive semidefinite whenever ``delta`` is.
    """
    w, u = eigh_hermitian(c)
    _check_positive(w, None)
    y = _congruence(u, delta, forward=True)
    return hermitian_part(_congruence(u, _divided_difference_exp_at_log(w) * y, forward=False))


def scrambled_divide(a: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Inverse scrambled product M_A^{-1}(Delta): entrywise factor
    (log a_i - log a_j)/(a_i - a_j) in the eigenbasis of ``a``."""
    w, u = eigh_hermitian(a)
    _check_positive(w, None)
    y = _congruence(u, delta, forward=True)
    return hermitian_part(_congruence(u, y / _divided_difference_exp_at_log(w), forward=False))


def frechet_exp(a: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Directional derivative of exp at Hermitian ``a`` along Hermitian ``delta``.

    Equals ``scrambled_multiply(matrix_exp(a), delta)``.
    """
    return scrambled_multiply(matrix_exp(a), delta)


def frechet_log(a: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Directional derivative of log at positive definite ``a`` along ``delta``.

    Equals ``scrambled_divide(a, delta)``; inverse of :func:`frechet_exp`
    in the sense ``frechet_exp(log a, frechet_log(a, delta)) == delta``.
    """
    return scrambled_divide(a, delta)


def trace_inner(x: np.ndarray, y: np.ndarray) -> float:
    """Real trace inner product Re trace(X* Y) on matrices (or stacked fields)."""
    return float(np.real(np.sum(np.conj(x) * np.asarray(y))))


# ---------------------------------------------------------------------------
# helpers

def _rebuild(f_of_w: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = (u * f_of_w[..., None, :]) @ np.conj(np.swapaxes(u, -1, -2))
    return hermitian_part(out)


def _congruence(u: np.ndarray, x: np.ndarray, forward: bool) -> np.ndarray:
    uh = np.conj(np.swapaxes(u, -1, -2))
    if forward:  # u* x u
        return uh @ np.asarray(x, dtype=complex) @ u
    return u @ np.asarray(x, dtype=complex) @ uh


def _check_positive(w: np.ndarray, floor: float | None) -> None:
    if w.size == 0:
        return
    wmin = float(np.min(w))
    if floor is None:
        floor = 1e-12 * float(np.max(np.abs(w)))
    if not wmin > floor:
        raise PositivityError(
            "matrix not positive definite: min eigenvalue %.6e (floor %.1e)" % (wmin, floor),
            min_eig=wmin,
        )


def _divided_difference_exp_at_log(w: np.ndarray) -> np.ndarray:
    """Factor matrix f_ij = (w_i - w_j)/(log w_i - log w_j) for positive ``w``.

    Evaluated as ``w_j * g(r)`` with ``r = w_i / w_j`` and
    ``g(r) = (r - 1)/log r``; for ``|r - 1| < 1e-4`` the series
    ``g(1 + x) = 1 + x/2 - x^2/12 + O(x^3)`` takes over, which covers the
    diagonal ``f_ii = w_i`` exactly in the limit.
    """
    r = w[..., :, None] / w[..., None, :]
    x = r - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = x / np.log(r)
    series = 1.0 + 0.5 * x - x * x / 12.0
    g = np.where(np.abs(x) < _SERIES_CUTOFF, series, direct)
    return w[..., None, :] * g
