"""Hermitian eigendecomposition, Schatten norms, PSD checks, spectral truncation.

The default eigensolver is LAPACK via numpy; a pure-numpy cyclic Jacobi
implementation is kept as a reference backend (env SOS_APPROX_EIG_BACKEND=jacobi
or backend="jacobi") and is cross-validated against it in the test suite.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

# negative eigenvalues above this (relative) magnitude mean genuine indefiniteness;
# below it they are solver noise and get clipped to zero
PSD_NOISE_REL = 1e-6
RANK_CUTOFF_REL = 1e-10


class NotPsdError(ValueError):
    """Matrix is materially not positive semidefinite."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class NonConvergenceError(RuntimeError):
    """Eigensolver failed to converge within its iteration cap."""


def require_hermitian(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Validate that M is Hermitian within tolerance and return (M + M*)/2."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if float(np.abs(M - M.conj().T).max(initial=0.0)) > tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    return (M + M.conj().T) / 2.0


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in descending order with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T

    def matrix_from(self, keep: np.ndarray) -> np.ndarray:
        """Reassemble keeping only the flagged eigenvalues."""
        lam = np.where(keep, self.eigenvalues, 0.0)
        V = self.eigenvectors
        return (V * lam) @ V.conj().T


def eig_hermitian(M: np.ndarray, backend: str | None = None) -> SpectralDecomposition:
    """Spectral decomposition of a Hermitian matrix, eigenvalues descending.

    Ties keep the solver's eigenvector order (stable sort), so truncation is
    deterministic for a fixed backend.
    """
    H = require_hermitian(M)
    backend = backend or os.environ.get("SOS_APPROX_EIG_BACKEND", "lapack")
    if backend == "lapack":
        try:
            w, V = np.linalg.eigh(H)
        except np.linalg.LinAlgError as exc:
            raise NonConvergenceError(f"eigh did not converge: {exc}") from exc
    elif backend == "jacobi":
        w, V = jacobi_eigh(H)
    else:
        raise ValueError(f"unknown eigensolver backend {backend!r}")
    order = np.argsort(-w, kind="stable")
    return SpectralDecomposition(w[order].astype(float), np.ascontiguousarray(V[:, order]))


def jacobi_eigh(H: np.ndarray, tol: float = 1e-14,
                max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic complex Jacobi eigensolver (reference implementation).

    Rotates away off-diagonal entries in row-major cyclic order until the
    off-diagonal Frobenius mass falls below tol * ||H||_F.  Deterministic;
    quadratically convergent once nearly diagonal.
    """
    A = np.array(H, dtype=complex)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    norm = np.linalg.norm(A)
    if n == 1 or norm == 0.0:
        return np.diag(A).real.copy(), V
    for _ in range(max_sweeps):
        # direct off-diagonal mass; the norm(A)^2 - norm(diag)^2 form cancels
        # catastrophically once nearly diagonal
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * norm:
            return np.diag(A).real.copy(), V
        # skipped entries leave off(A) well under tol*norm
        threshold = 0.1 * tol * norm / n
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= threshold:
                    continue
                app = A[p, p].real
                aqq = A[q, q].real
                # unitary 2x2 rotation diagonalizing [[app, apq], [apq*, aqq]]
                phase = apq / abs(apq)
                tau = (aqq - app) / (2.0 * abs(apq))
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c * phase
                rot_p = c * A[:, p] - np.conj(s) * A[:, q]
                rot_q = s * A[:, p] + c * A[:, q]
                A[:, p], A[:, q] = rot_p, rot_q
                rot_p = c * A[p, :] - s * A[q, :]
                rot_q = np.conj(s) * A[p, :] + c * A[q, :]
                A[p, :], A[q, :] = rot_p, rot_q
                A[p, q] = 0.0
                A[q, p] = 0.0
                rot_p = c * V[:, p] - np.conj(s) * V[:, q]
                rot_q = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = rot_p, rot_q
    raise NonConvergenceError(
        f"Jacobi sweeps did not converge after {max_sweeps} sweeps")


def schatten_norm(M: np.ndarray, p: float) -> float:
    """(sum |lambda_i|^p)^(1/p) for Hermitian M; max |lambda_i| at p = inf."""
    if not (p > 1):
        raise ValueError(f"Schatten p-norm requires p > 1, got {p}")
    w = eig_hermitian(M).eigenvalues
    a = np.abs(w)
    if math.isinf(p):
        return float(a.max(initial=0.0))
    if not a.any():
        return 0.0
    # normalize by the top eigenvalue to dodge overflow for large p
    amax = a.max()
    return float(amax * ((a / amax) ** p).sum() ** (1.0 / p))


def clipped_spectrum(M: np.ndarray, noise_rel: float = PSD_NOISE_REL) -> SpectralDecomposition:
    """Spectrum of a numerically-PSD matrix with noise-level negatives clipped.

    Raises NotPsdError when an eigenvalue is below -noise_rel * ||M||_inf.
    """
    dec = eig_hermitian(M)
    w = dec.eigenvalues
    scale = float(np.abs(w).max(initial=0.0))
    lo = float(w.min(initial=0.0))
    if lo < -noise_rel * max(scale, 1e-300):
        raise NotPsdError(
            f"matrix has eigenvalue {lo:.3e}, materially indefinite", lo)
    return SpectralDecomposition(np.maximum(w, 0.0), dec.eigenvectors)


def truncation_count(trace: float, eps: float, p: float) -> int:
    """Number of leading eigenvalues the rank-reduction proof keeps (p < inf).

    The exact integer k with k < (trace/eps)^(p/(p-1)) <= k + 1, computed in
    the log domain; values within 1e-9 of an integer are snapped before the
    strict comparison so float fuzz never violates the strict rank bound.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not (p > 1) or math.isinf(p):
        raise ValueError("truncation_count applies to 1 < p < inf")
    if trace <= 0:
        return 0
    log_x = (p / (p - 1.0)) * (math.log(trace) - math.log(eps))
    if log_x > 100:          # far beyond any representable dimension
        return 2 ** 63 - 1
    x = math.exp(log_x)
    snapped = round(x)
    if abs(x - snapped) <= 1e-9 * max(1.0, abs(snapped)):
        x = float(snapped)
    return max(0, math.ceil(x) - 1)


def count_above(values: np.ndarray, eps: float) -> int:
    """Entries strictly above eps, with a 1e-12 relative guard.

    Eigenvalues sitting exactly on the threshold (e.g. lambda_1 = tr for a
    rank-one matrix at eps = tr) must not survive on account of rounding:
    keeping them breaks the strict rank bound k < tr/eps.
    """
    return int((values > eps * (1.0 + 1e-12)).sum())


def truncate_rank(M: np.ndarray, eps: float, p: float) -> np.ndarray:
    """Best-rank spectral truncation M' with ||M - M'||_p <= eps.

    Keeps the proof's exact eigenvalue count: for p < inf the largest k with
    k + 1 >= (tr(M)/eps)^(p/(p-1)); for p = inf all eigenvalues above eps.
    The result is PSD and its rank is strictly below (tr(M)/eps)^(p/(p-1))
    (resp. tr(M)/eps).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not (p > 1):
        raise ValueError(f"requires p > 1, got {p}")
    dec = clipped_spectrum(M)
    w = dec.eigenvalues
    if math.isinf(p):
        k = count_above(w, eps)
    else:
        k = truncation_count(float(w.sum()), eps, p)
    keep = np.zeros(len(w), dtype=bool)
    keep[:min(k, len(w))] = True
    return dec.matrix_from(keep)


def low_rank_factor(M: np.ndarray, cutoff_rel: float = RANK_CUTOFF_REL) -> list[np.ndarray]:
    """Vectors c_i = sqrt(lambda_i) v_i with sum c_i c_i* = M (numerical rank many)."""
    dec = clipped_spectrum(M)
    w, V = dec.eigenvalues, dec.eigenvectors
    if len(w) == 0 or w[0] <= 0.0:
        return []
    cut = cutoff_rel * w[0]
    return [np.sqrt(w[i]) * V[:, i] for i in range(len(w)) if w[i] > cut]


def numerical_rank(M: np.ndarray, cutoff_rel: float = 1e-9) -> int:
    """Eigenvalue count above cutoff_rel * lambda_max."""
    w = eig_hermitian(M).eigenvalues
    if len(w) == 0 or w[0] <= 0:
        return 0
    return int((w > cutoff_rel * w[0]).sum())


def psd_part(M: np.ndarray) -> np.ndarray:
    """Projection onto the PSD cone (negative eigenvalues zeroed)."""
    dec = eig_hermitian(M)
    return dec.matrix_from(dec.eigenvalues > 0.0)


# -- shared JSON coordinate schema for Hermitian matrices ----------------------

def hermitian_to_dict(M: np.ndarray, drop_tol: float = 0.0) -> dict:
    M = np.asarray(M, dtype=complex)
    entries = []
    for i in range(M.shape[0]):
        for j in range(i, M.shape[1]):
            v = M[i, j]
            if abs(v) > drop_tol or (i == j and v != 0):
                entries.append([i, j, v.real, v.imag])
    return {"dim": int(M.shape[0]), "hermitian": True, "entries": entries}


def hermitian_from_dict(data: dict) -> np.ndarray:
    d = int(data["dim"])
    M = np.zeros((d, d), dtype=complex)
    for i, j, re, im in data["entries"]:
        M[i, j] = complex(re, im)
        if i != j:
            M[j, i] = complex(re, -im)
    return M
