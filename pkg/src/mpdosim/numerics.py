"""Dense linear algebra kernels shared by the tensor-network code.

Tensors are plain ``numpy`` arrays (C order, complex128). Matricization is always
an explicit ``transpose`` followed by ``reshape`` so that leg groupings are
deterministic.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import math

import numpy as np
import scipy.linalg
from scipy.linalg.blas import zherk

HERMITIAN_TOL = 1e-10
LOG_FLOOR = 1e-15


class NumericError(ArithmeticError):
    """A decomposition failed or its input violated a numerical precondition."""


class TruncatedSVD(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray
    discarded_weight: float
    zero_norm: bool = False


def contract(a: np.ndarray, b: np.ndarray, axis_pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Sum over paired axes of ``a`` and ``b``.

    The result carries the free axes of ``a`` followed by the free axes of ``b``.
    """
    axes_a = [p[0] for p in axis_pairs]
    axes_b = [p[1] for p in axis_pairs]
    for i, j in zip(axes_a, axes_b):
        if a.shape[i] != b.shape[j]:
            raise ValueError(
                f"cannot contract axis {i} (extent {a.shape[i]}) with axis {j} (extent {b.shape[j]})"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def _as_matrix(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got an array of shape {m.shape}")
    return m


def svd(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD with singular values in descending order.

    Falls back to the slower but more robust ``gesvd`` driver when the default
    divide-and-conquer routine does not converge.
    """
    m = _as_matrix(m)
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        pass
    try:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"SVD failed to converge on a {m.shape} matrix") from exc


def singular_values(m: np.ndarray) -> np.ndarray:
    """Singular values in descending order, with the same ``gesvd`` fallback as :func:`svd`."""
    m = _as_matrix(m)
    try:
        return np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError:
        pass
    try:
        return scipy.linalg.svd(m, compute_uv=False, lapack_driver="gesvd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"SVD failed to converge on a {m.shape} matrix") from exc


def gram(m: np.ndarray, left: bool = True) -> np.ndarray:
    """Hermitian Gram matrix ``m m^dagger`` (``left``) or ``m^dagger m`` via a rank-k update."""
    m = np.ascontiguousarray(m, dtype=np.complex128)
    # the transpose is a Fortran-ordered view, so BLAS sees conj(m m^dagger) without a copy
    c = zherk(1.0, m.T, trans=2 if left else 0)
    x = np.triu(c).conj()
    return x + np.triu(x, 1).conj().T


def keep_count(s: np.ndarray, eps_rel: float, max_rank: int | None = None) -> int:
    """Number of leading values with ``s_j / s_0 >= eps_rel``, capped at ``max_rank``.

    At least one value is always kept.
    """
    if s.size == 0 or s[0] <= 0.0:
        return 1
    k = int(np.count_nonzero(s >= eps_rel * s[0]))
    if max_rank is not None:
        k = min(k, max_rank)
    return max(k, 1)


def weight_cutoff(eps_rel: float, floor: float = 0.0) -> float:
    """Singular-value ratio cutoff that drops weights ``s_j^2 / s_0^2 < eps_rel``.

    ``floor`` is a lower bound on the returned ratio, used to discard numerical zeros.
    """
    if eps_rel < 0:
        raise ValueError("eps_rel must be non-negative")
    return max(math.sqrt(eps_rel), floor)


def truncated_svd(m: np.ndarray, eps_rel: float = 0.0, max_rank: int | None = None) -> TruncatedSVD:
    """SVD keeping singular values with ``s_j / s_0 >= eps_rel``, at most ``max_rank`` of them.

    ``discarded_weight`` is the sum of the squares of the dropped values. A zero
    matrix yields a rank-one zero factorization with ``zero_norm`` set.
    """
    if eps_rel < 0:
        raise ValueError("eps_rel must be non-negative")
    if max_rank is not None and max_rank < 1:
        raise ValueError("max_rank must be at least 1")
    m = _as_matrix(m)
    u, s, vh = svd(m)
    if s.size == 0 or s[0] == 0.0:
        u0 = np.zeros((m.shape[0], 1), dtype=m.dtype)
        vh0 = np.zeros((1, m.shape[1]), dtype=m.dtype)
        if m.shape[0]:
            u0[0, 0] = 1.0
        if m.shape[1]:
            vh0[0, 0] = 1.0
        return TruncatedSVD(u0, np.zeros(1), vh0, 0.0, True)
    k = keep_count(s, eps_rel, max_rank)
    discarded = float(np.sum(s[k:] ** 2))
    return TruncatedSVD(u[:, :k], s[:k], vh[:k], discarded)


def qr(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR decomposition, ``m = q @ r`` with ``q`` an isometry."""
    m = _as_matrix(m)
    try:
        return np.linalg.qr(m, mode="reduced")
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"QR failed on a {m.shape} matrix") from exc


def _check_hermitian(h: np.ndarray, tol: float, what: str) -> None:
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    dev = float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0
    if dev > tol * scale:
        raise ValueError(f"{what}: deviation from hermiticity {dev:.3e} exceeds {tol:.1e}")


def eigh(h: np.ndarray, tol: float = HERMITIAN_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    h = _as_matrix(h)
    _check_hermitian(h, tol, "eigh")
    h = 0.5 * (h + h.conj().T)
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericError("eigh failed to converge") from exc


def mat_exp_antihermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """``exp(a)`` for anti-Hermitian ``a``, exactly unitary up to rounding.

    Uses the eigendecomposition of the Hermitian matrix ``i a``.
    """
    a = _as_matrix(a)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and float(np.max(np.abs(a + a.conj().T))) > tol * scale:
        raise ValueError("mat_exp_antihermitian: input is not anti-Hermitian")
    w, v = eigh(1j * a, tol=np.inf)
    # a = -i h  =>  exp(a) = V exp(-i w) V^dagger
    return (v * np.exp(-1j * w)) @ v.conj().T


def mat_log_psd(x: np.ndarray, floor: float = LOG_FLOOR) -> np.ndarray:
    """Matrix logarithm of a PSD matrix with eigenvalues clamped below at ``floor``."""
    if floor <= 0:
        raise ValueError("floor must be positive")
    w, v = eigh(x)
    if w.size and w[0] < -1e-8:
        raise ValueError(f"mat_log_psd: negative eigenvalue {w[0]:.3e}")
    logw = np.log(np.maximum(w, floor))
    return (v * logw) @ v.conj().T


def psd_sqrt(x: np.ndarray, rtol: float = 0.0) -> np.ndarray:
    """Square root of a Hermitian PSD matrix.

    Eigenvalues below ``rtol`` times the largest one (and all negative ones) are set to zero.
    """
    w, v = np.linalg.eigh(0.5 * (x + x.conj().T))
    w = np.where(w > rtol * max(w[-1], 0.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T
