"""Takagi factorization of complex symmetric matrices.

A complex symmetric matrix A (A = A^T entrywise, not Hermitian) factors as
``A = U @ diag(S) @ U.T`` with U unitary and S the descending nonnegative
singular values of A.  Two routes are provided: phase correction of a
complex SVD (:func:`takagi_svd`), and the real symmetric eigenproblem of
the doubled matrix ``[[B, C], [C, -B]]`` with B, C the real and imaginary
parts of A (:func:`takagi_from_doubled`).  Both require distinct, positive
singular values and raise :class:`~takagi_scan.errors.DegenerateInput`
otherwise; for distinct positive singular values the factor U is unique up
to the signs of its columns.
"""

from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateInput,
    DimensionMismatch,
    MatrixFormatError,
    NotSymmetric,
)

SYM_TOL = 1e-12
TOL_DISTINCT = 1e-8


class TakagiPair(NamedTuple):
    """Unitary factor U and descending singular values S with A = U S U^T."""

    U: np.ndarray
    S: np.ndarray

    @property
    def n(self):
        return self.S.shape[0]


class VerifyResult(NamedTuple):
    residual: float
    unitarity_defect: float
    ordering_ok: bool


def ensure_symmetric(A, tol=SYM_TOL):
    """Validate complex symmetry of a square matrix and re-symmetrize it.

    Returns ``(A + A.T) / 2`` as a complex array, absorbing roundoff-level
    asymmetry from matrix assembly.  Raises
    :class:`~takagi_scan.errors.NotSymmetric` when the relative asymmetry
    ``||A - A.T||_F / ||A||_F`` exceeds ``tol``.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    D = A - A.T
    asym2 = np.vdot(D, D).real
    floor = max(np.vdot(A, A).real, np.finfo(float).tiny)
    if asym2 > tol * tol * floor:
        raise NotSymmetric(
            f"relative asymmetry {np.sqrt(asym2 / floor):.3e} exceeds {tol:.1e}"
        )
    return 0.5 * (A + A.T)


def _check_distinct_positive(S, tol_distinct):
    # Degeneracy thresholds are relative to sigma_1 so the check is
    # scale-invariant; S is descending.
    top = S[0]
    if top <= 0.0 or S[-1] <= tol_distinct * top:
        raise DegenerateInput(DegenerateInput.RANK_DEFICIENT)
    gaps = S[:-1] - S[1:]
    bad = np.nonzero(gaps <= tol_distinct * top)[0]
    if bad.size:
        raise DegenerateInput(DegenerateInput.COALESCENT, pair=int(bad[0]) + 1)


def takagi_svd(A, tol_distinct=TOL_DISTINCT):
    """Takagi factorization via phase correction of the complex SVD.

    Parameters
    ----------
    A : array_like
        Complex symmetric n x n matrix with distinct singular values,
        all larger than ``tol_distinct * sigma_1``.
    tol_distinct : float
        Relative threshold below which adjacent singular-value gaps (or
        the smallest singular value) are treated as degenerate.

    Returns
    -------
    TakagiPair
        ``(U, S)`` with ``A = U @ diag(S) @ U.T`` and S descending.

    Notes
    -----
    With distinct singular values, ``U^* A conj(U)`` is diagonal for the
    SVD factor U; each diagonal entry equals ``sigma_k * exp(2 i phi_k)``
    and U is corrected column-wise by ``exp(i phi_k)``.  The principal
    branch ``phi_k in (-pi/2, pi/2]`` is chosen, which makes the output
    deterministic; smoothness across nearby calls is the continuation
    module's job, not this one's.
    """
    A = ensure_symmetric(A)
    U, S, _ = np.linalg.svd(A)
    _check_distinct_positive(S, tol_distinct)
    # d_k = (U^* A conj(U))_kk without forming the full product.
    T = A @ np.conj(U)
    d = np.einsum("ij,ij->j", np.conj(U), T)
    phases = np.exp(0.5j * np.angle(d / S))
    return TakagiPair(U * phases, S)


def build_doubled(A):
    """Real symmetric 2n x 2n matrix ``[[B, C], [C, -B]]`` for A = B + iC.

    Its spectrum is the symmetrized singular spectrum {+/- sigma_j} of A,
    which reduces the Takagi factorization to a real symmetric
    eigenproblem.
    """
    A = ensure_symmetric(A)
    B = A.real
    C = A.imag
    return np.block([[B, C], [C, -B]])


def takagi_from_doubled(A, tol_distinct=TOL_DISTINCT):
    """Takagi factorization from the doubled real symmetric eigenproblem.

    Computes an orthonormal eigenbasis ``M [X; Y] = [X; Y] diag(S)`` for
    the n largest eigenvalues of the doubled matrix and returns
    ``U = X + iY``.  Agrees with :func:`takagi_svd` up to column signs;
    serves as the backend when a complex SVD is not available.
    """
    M = build_doubled(A)
    n = M.shape[0] // 2
    w, V = np.linalg.eigh(M)
    # eigh is ascending: the last n columns carry sigma_n..sigma_1.
    S = np.ascontiguousarray(w[2 * n - 1 : n - 1 : -1])
    _check_distinct_positive(S, tol_distinct)
    W = V[:, 2 * n - 1 : n - 1 : -1]
    U = W[:n] + 1j * W[n:]
    return TakagiPair(U, S)


def takagi_factor(A, tol_distinct=TOL_DISTINCT, backend="svd"):
    """Dispatch to the configured factorization kernel."""
    if backend == "svd":
        return takagi_svd(A, tol_distinct)
    if backend == "doubled":
        return takagi_from_doubled(A, tol_distinct)
    raise ValueError(f"unknown backend {backend!r}")


def verify_takagi(A, pair):
    """Reconstruction and unitarity diagnostics for a factorization.

    Returns ``VerifyResult(residual, unitarity_defect, ordering_ok)`` with
    ``residual = ||A - U S U^T||_F / max(||A||_F, tiny)`` and
    ``unitarity_defect = ||U^* U - I||_F``.
    """
    A = np.asarray(A, dtype=complex)
    U, S = pair
    n = S.shape[0]
    if A.shape != (n, n) or U.shape != (n, n):
        raise DimensionMismatch(f"matrix {A.shape} vs factor {U.shape} / values {S.shape}")
    recon = (U * S) @ U.T
    residual = np.linalg.norm(A - recon) / max(np.linalg.norm(A), np.finfo(float).tiny)
    defect = np.linalg.norm(U.conj().T @ U - np.eye(n))
    ordering_ok = bool(np.all(np.diff(S) <= 0.0) and S[-1] >= 0.0)
    return VerifyResult(float(residual), float(defect), ordering_ok)


def write_matrix(path, A):
    """Write a complex matrix in the plain-text exchange format.

    One header line with n, then n^2 lines ``re im`` in row-major order,
    17 significant digits.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{A.shape[0]}\n")
        for v in A.ravel():
            fh.write(f"{v.real:.17g} {v.imag:.17g}\n")


def read_matrix(path):
    """Read a matrix written by :func:`write_matrix`.

    Raises :class:`~takagi_scan.errors.MatrixFormatError` with the
    offending 1-based line number on malformed input.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixFormatError(1, "empty file, expected dimension header")
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise MatrixFormatError(1, f"expected integer dimension, got {lines[0]!r}") from None
    if n < 1:
        raise MatrixFormatError(1, f"dimension must be positive, got {n}")
    need = n * n
    body = [ln for ln in lines[1:]]
    if len(body) < need:
        raise MatrixFormatError(len(lines) + 1, f"expected {need} entry lines, found {len(body)}")
    out = np.empty(need, dtype=complex)
    for idx in range(need):
        parts = body[idx].split()
        if len(parts) != 2:
            raise MatrixFormatError(idx + 2, f"expected 're im', got {body[idx]!r}")
        try:
            out[idx] = complex(float(parts[0]), float(parts[1]))
        except ValueError:
            raise MatrixFormatError(idx + 2, f"could not parse floats in {body[idx]!r}") from None
    return out.reshape(n, n)
