"""Active-subspace estimation from gradient samples.

The pipeline: average gradient outer products into the symmetric matrix
C-hat, eigendecompose it (cyclic Jacobi, deterministic across platforms),
pick the active dimension at the largest spectral gap (or by explicit
override), summarize per-parameter influence with eigenvalue-weighted
activity scores, and compare subspaces from different designs or regions with
the projector distance (sine of the largest principal angle).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .errors import (
    DegenerateSpectrumError,
    DimensionMismatchError,
    EigenSolverError,
    GradientEvaluationError,
    NonOrthonormalError,
)
from .gradients import GradientSample

__all__ = [
    "CMatrix",
    "SubspaceResult",
    "ActivityScores",
    "ActiveVars",
    "estimate_c",
    "eigendecompose",
    "eigendecompose_batch",
    "select_dimension",
    "activity_scores",
    "subspace_distance",
    "subspace_distance_batch",
    "project",
    "JACOBI_TOL_REL",
    "JACOBI_MAX_SWEEPS",
]

#: Jacobi convergence: off-diagonal Frobenius mass below this times ||C||_F.
JACOBI_TOL_REL = 1e-14
#: Jacobi sweep cap.
JACOBI_MAX_SWEEPS = 100

#: Eigenvalues within this (times lambda_1) below zero are clamped to zero.
PSD_CLAMP_REL = 1e-10

#: Spectral floor used by the gap heuristic, relative to lambda_1.
GAP_FLOOR_REL = 1e-14


@dataclass(frozen=True)
class CMatrix:
    """Monte Carlo estimate of the gradient outer-product matrix."""

    entries: np.ndarray
    M: int

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SubspaceResult:
    """Full spectral decomposition of C-hat plus the active/inactive split.

    ``eigenvalues`` are sorted descending; ``eigenvectors`` holds orthonormal
    columns with each column's largest-magnitude component positive. ``n`` is
    the active dimension (None until selected; use :meth:`with_n` or
    :func:`select_dimension`).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n: Optional[int] = None

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def _require_n(self) -> int:
        if self.n is None:
            raise ValueError("active dimension n has not been selected yet")
        return self.n

    @property
    def W1(self) -> np.ndarray:
        """First n eigenvector columns (the active subspace basis)."""
        return self.eigenvectors[:, : self._require_n()]

    @property
    def W2(self) -> np.ndarray:
        """Remaining m - n columns (the inactive subspace basis)."""
        return self.eigenvectors[:, self._require_n():]

    def with_n(self, n: int) -> "SubspaceResult":
        if not 1 <= n <= self.dim:
            raise ValueError(f"n must be in 1..{self.dim}, got {n}")
        return replace(self, n=int(n))

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.eigenvectors.tolist(),
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubspaceResult":
        return cls(
            eigenvalues=np.asarray(d["eigenvalues"], dtype=np.float64),
            eigenvectors=np.asarray(d["eigenvectors"], dtype=np.float64),
            n=d.get("n"),
        )


@dataclass(frozen=True)
class ActivityScores:
    """Eigenvalue-weighted squared eigenvector components, per parameter."""

    raw: np.ndarray
    normalized: np.ndarray
    ranking: np.ndarray


@dataclass(frozen=True)
class ActiveVars:
    """A point expressed in active (y) and inactive (z) coordinates."""

    y: np.ndarray
    z: np.ndarray


def _gradient_matrix(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        G = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    else:
        rows = list(samples)
        if not rows:
            raise ValueError("need at least one gradient sample")
        dims = {np.asarray(s.g).shape for s in rows}
        if len(dims) != 1:
            raise DimensionMismatchError(f"inconsistent gradient dimensions: {sorted(dims)}")
        G = np.stack([np.asarray(s.g, dtype=np.float64) for s in rows])
    if G.ndim != 2 or G.shape[0] < 1:
        raise ValueError(f"expected (M, m) gradients, got shape {G.shape}")
    if not np.isfinite(G).all():
        raise GradientEvaluationError(
            "non-finite gradient rows passed to estimate_c; filter failures first"
        )
    return G


def estimate_c(samples: Union[Sequence[GradientSample], np.ndarray]) -> CMatrix:
    """C-hat = (1/M) sum of g g^T over the samples, explicitly symmetrized."""
    G = _gradient_matrix(samples)
    M = G.shape[0]
    C = (G.T @ G) / M
    C = 0.5 * (C + C.T)
    return CMatrix(entries=C, M=M)


def _as_c_entries(c) -> np.ndarray:
    A = c.entries if isinstance(c, CMatrix) else np.asarray(c, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {A.shape}")
    scale = np.abs(A).max()
    if scale > 0 and np.abs(A - A.T).max() > 1e-12 * scale:
        raise EigenSolverError("input matrix is not symmetric within 1e-12 relative")
    return np.asarray(A, dtype=np.float64)


def eigendecompose_batch(Cs: np.ndarray):
    """Decompose a batch of symmetric matrices with shared conventions.

    Returns ``(eigenvalues (B, m) descending, eigenvectors (B, m, m), ok (B,))``
    with the sign convention applied and near-zero negative eigenvalues
    clamped. Convergence failures are reported per matrix via ``ok``.
    """
    Cs = np.asarray(Cs, dtype=np.float64)
    vals, vecs, ok, _ = _kernels.jacobi_eigh_batch(Cs, JACOBI_TOL_REL, JACOBI_MAX_SWEEPS)
    B, m = vals.shape
    order = np.argsort(-vals, axis=1, kind="stable")
    rows = np.arange(B)[:, None]
    vals = vals[rows, order]
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=2)
    # Sign convention: largest-magnitude component of each column positive.
    comp = np.argmax(np.abs(vecs), axis=1)
    picked = vecs[rows, comp, np.arange(m)[None, :]]
    flip = np.where(picked < 0.0, -1.0, 1.0)
    vecs = vecs * flip[:, None, :]
    # Clamp the numerically-negative tail of PSD inputs.
    lam1 = vals[:, 0]
    band = -PSD_CLAMP_REL * np.maximum(lam1, 0.0)
    clamp = (vals < 0.0) & (vals >= band[:, None]) & (lam1[:, None] > 0.0)
    vals = np.where(clamp, 0.0, vals)
    return vals, vecs, ok


def eigendecompose(c) -> SubspaceResult:
    """Full spectral decomposition of C-hat (active dimension not yet chosen).

    Raises :class:`EigenSolverError` if the Jacobi iteration fails to reach
    tolerance within the sweep cap or the input is visibly asymmetric.
    """
    A = _as_c_entries(c)
    vals, vecs, ok = eigendecompose_batch(A[None, :, :])
    if not ok[0]:
        raise EigenSolverError(
            f"Jacobi iteration did not converge within {JACOBI_MAX_SWEEPS} sweeps"
        )
    return SubspaceResult(eigenvalues=vals[0], eigenvectors=vecs[0], n=None)


def select_dimension(eigenvalues, floor_rel: float = GAP_FLOOR_REL) -> int:
    """Active dimension at the largest base-10 spectral gap.

    Eigenvalues below ``floor_rel * lambda_1`` are floored before the ratio so
    a zero tail cannot produce an infinite gap beyond the first crossing.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.size < 1:
        raise ValueError(f"expected a 1-D eigenvalue vector, got shape {lam.shape}")
    if np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be sorted descending")
    if lam[0] <= 0.0:
        raise DegenerateSpectrumError("all eigenvalues are zero (or negative)")
    if lam.size == 1:
        return 1
    floor = floor_rel * lam[0]
    lam_f = np.maximum(lam, floor)
    gaps = np.log10(lam_f[:-1] / lam_f[1:])
    return int(np.argmax(gaps)) + 1


def activity_scores(subspace: SubspaceResult) -> ActivityScores:
    """Per-parameter scores alpha_i = sum_j lambda_j * w_ij^2.

    ``normalized`` divides by the maximum score; ``ranking`` lists parameter
    indices most-influential first, ties broken by ascending index.
    """
    lam = subspace.eigenvalues
    W = subspace.eigenvectors
    raw = (W**2) @ lam
    mx = raw.max()
    normalized = raw / mx if mx > 0 else np.zeros_like(raw)
    ranking = np.argsort(-raw, kind="stable")
    return ActivityScores(raw=raw, normalized=normalized, ranking=ranking)


def _check_orthonormal(A: np.ndarray, tol: float = 1e-8) -> None:
    gram = A.T @ A
    if np.abs(gram - np.eye(A.shape[1])).max() > tol:
        raise NonOrthonormalError(
            "matrix columns are not orthonormal within tolerance "
            f"{tol} (max deviation {np.abs(gram - np.eye(A.shape[1])).max():.3e})"
        )


def subspace_distance(w1_a, w1_b, norm: str = "spectral") -> float:
    """Distance between two equal-dimension subspaces via their projectors.

    ``spectral`` (default) returns the operator-2 norm of the projector
    difference — the sine of the largest principal angle, always in [0, 1].
    ``frobenius`` returns the Frobenius norm of the same difference.
    """
    A = np.atleast_2d(np.asarray(w1_a, dtype=np.float64))
    B = np.atleast_2d(np.asarray(w1_b, dtype=np.float64))
    if A.ndim != 2 or B.ndim != 2 or A.shape != B.shape:
        raise DimensionMismatchError(f"subspace shapes differ: {A.shape} vs {B.shape}")
    if A.shape[0] < A.shape[1]:
        raise DimensionMismatchError(
            f"expected tall (m, n) bases with n <= m, got shape {A.shape}"
        )
    _check_orthonormal(A)
    _check_orthonormal(B)
    return float(subspace_distance_batch(A[None, :, :], B, norm=norm)[0])


def subspace_distance_batch(W1s: np.ndarray, w1_ref: np.ndarray, norm: str = "spectral") -> np.ndarray:
    """Distances from each basis in a (B, m, n) stack to a reference basis.

    Inputs are assumed orthonormal (validated by the scalar wrapper; batch
    callers validate at construction). Uses the principal-angle identities
    ||P_A - P_B||_2 = sqrt(1 - sigma_min(A^T B)^2) and
    ||P_A - P_B||_F = sqrt(2 (n - ||A^T B||_F^2)), clipped into range to keep
    the metric bounds exact under rounding.
    """
    W1s = np.asarray(W1s, dtype=np.float64)
    w1_ref = np.asarray(w1_ref, dtype=np.float64)
    T = np.einsum("bmn,mk->bnk", W1s, w1_ref)
    if norm == "spectral":
        sig = np.linalg.svd(T, compute_uv=False)
        smin = sig[:, -1]
        return np.sqrt(np.clip(1.0 - smin**2, 0.0, 1.0))
    if norm == "frobenius":
        n = w1_ref.shape[1]
        fro2 = (T**2).sum(axis=(1, 2))
        return np.sqrt(np.clip(2.0 * (n - fro2), 0.0, None))
    raise ValueError(f"norm must be 'spectral' or 'frobenius', got {norm!r}")


def project(x, subspace: SubspaceResult) -> ActiveVars:
    """Split a point into active coordinates y = W1^T x and inactive z = W2^T x."""
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.shape[0] != subspace.dim:
        raise DimensionMismatchError(
            f"point has length {v.shape[0]}, subspace dimension is {subspace.dim}"
        )
    return ActiveVars(y=subspace.W1.T @ v, z=subspace.W2.T @ v)


def reconstruct(av: ActiveVars, subspace: SubspaceResult) -> np.ndarray:
    """Inverse of :func:`project`: x = W1 y + W2 z."""
    return subspace.W1 @ av.y + subspace.W2 @ av.z
