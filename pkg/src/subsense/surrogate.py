"""Polynomial response surfaces over active variables.

Points drawn from a region are projected through an active-subspace basis
W1 into n active coordinates, standardized, expanded in a graded-lexicographic
monomial basis of total degree <= d (d in {1,2,3}), and fit by least squares.
Order selection uses the Akaike Information Criterion; by default the AIC's
residual sum of squares comes from an independently drawn test design (a
training-RSS variant is available via ``aic_on``).

The global-vs-local comparison pits a surrogate built on the full input box
through the global basis against one built on the region through the local
basis. Both are scored on the same region test design, answering the question
a modeler actually faces: does the surrogate I already built for the whole
domain predict this region as well as a cheap local rebuild would?
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import combinations_with_replacement
from typing import Optional, Sequence

import numpy as np

from .activesub import SubspaceResult
from .errors import InvalidAicError, SelectionError, UnderDeterminedError
from .models import QoiModel
from .sampling import (
    STREAM_SURROGATE_TEST,
    STREAM_SURROGATE_TRAIN,
    ParameterSpace,
    derive_seed,
    lhs,
)

__all__ = [
    "SurrogateModel",
    "ComparisonRow",
    "monomial_exponents",
    "monomial_basis",
    "basis_matrix",
    "fit_polynomial",
    "aic",
    "build_and_select",
    "compare_global_local",
    "DEFAULT_TRAIN_COUNT",
    "DEFAULT_TEST_COUNT",
    "AIC_RSS_FLOOR",
]

#: Default training/testing design sizes per region.
DEFAULT_TRAIN_COUNT = 500
DEFAULT_TEST_COUNT = 500

#: RSS floor inside the AIC logarithm.
AIC_RSS_FLOOR = 1e-30

_ALLOWED_ORDERS = (1, 2, 3)


def monomial_exponents(n: int, d: int) -> tuple:
    """Exponent tuples of all monomials with total degree <= d, grlex order.

    Constant first, then degree classes in increasing total degree; within a
    class, lexicographic with the first variable most significant. The count
    is C(n+d, d).
    """
    if d not in _ALLOWED_ORDERS:
        raise ValueError(f"order must be one of {_ALLOWED_ORDERS}, got {d}")
    if n < 1:
        raise ValueError(f"need at least one active variable, got n={n}")
    out = []
    for total in range(d + 1):
        for combo in combinations_with_replacement(range(n), total):
            e = [0] * n
            for v in combo:
                e[v] += 1
            out.append(tuple(e))
    return tuple(out)


def monomial_basis(y, d: int) -> np.ndarray:
    """Basis vector of one active point: all monomials of degree <= d."""
    v = np.asarray(y, dtype=np.float64).reshape(-1)
    return basis_matrix(v[None, :], monomial_exponents(v.shape[0], d))[0]


def basis_matrix(Y: np.ndarray, exponents: tuple) -> np.ndarray:
    """(N, n_terms) design matrix for active points Y (N, n)."""
    N = Y.shape[0]
    Phi = np.empty((N, len(exponents)), dtype=np.float64)
    for j, e in enumerate(exponents):
        col = np.ones(N, dtype=np.float64)
        for var, p in enumerate(e):
            if p:
                col = col * Y[:, var] ** p
        Phi[:, j] = col
    return Phi


@dataclass(frozen=True)
class SurrogateModel:
    """A fitted polynomial response surface in standardized active variables."""

    n: int
    order: int
    coefficients: np.ndarray
    exponents: tuple
    y_mean: np.ndarray
    y_std: np.ndarray
    train_rss: float
    train_count: int
    subspace_source: Optional[str] = None
    w1: Optional[np.ndarray] = None
    test_rss: Optional[float] = None
    test_count: Optional[int] = None
    aic: Optional[float] = None

    @property
    def n_coefficients(self) -> int:
        return self.coefficients.shape[0]

    def predict_y(self, Y) -> np.ndarray:
        """Predict from active coordinates (pre-projection)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        Z = (Y - self.y_mean[None, :]) / self.y_std[None, :]
        return basis_matrix(Z, self.exponents) @ self.coefficients

    def predict(self, X) -> np.ndarray:
        """Predict from full-space points via the stored W1 projection."""
        if self.w1 is None:
            raise ValueError("this surrogate has no stored projection basis")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self.predict_y(X @ self.w1)


def _train_arrays(train):
    if isinstance(train, tuple) and len(train) == 2:
        Y, q = train
    else:
        pairs = list(train)
        Y = np.stack([np.asarray(p[0], dtype=np.float64).reshape(-1) for p in pairs])
        q = np.array([float(p[1]) for p in pairs])
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if Y.shape[0] != q.shape[0]:
        raise ValueError(f"{Y.shape[0]} points but {q.shape[0]} values")
    return Y, q


def fit_polynomial(train, d: int) -> SurrogateModel:
    """Least-squares polynomial of order d over standardized active variables.

    ``train`` is either a list of (y, q) pairs or a tuple (Y, q) of arrays.
    Rank deficiency resolves to the minimum-norm solution. Training counts
    below the coefficient count raise :class:`UnderDeterminedError`.
    """
    Y, q = _train_arrays(train)
    n = Y.shape[1]
    exps = monomial_exponents(n, d)
    if Y.shape[0] < len(exps):
        raise UnderDeterminedError(
            f"{Y.shape[0]} training points cannot determine {len(exps)} coefficients "
            f"(n={n}, d={d})"
        )
    mean = Y.mean(axis=0)
    std = Y.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    Z = (Y - mean[None, :]) / std[None, :]
    Phi = basis_matrix(Z, exps)
    coeffs, _, _, _ = np.linalg.lstsq(Phi, q, rcond=None)
    resid = q - Phi @ coeffs
    return SurrogateModel(
        n=n,
        order=d,
        coefficients=coeffs,
        exponents=exps,
        y_mean=mean,
        y_std=std,
        train_rss=float(resid @ resid),
        train_count=Y.shape[0],
    )


def aic(rss: float, n_params: int, n_points: int) -> float:
    """Gaussian-likelihood AIC: n_points * ln(rss / n_points) + 2 * n_params.

    ``rss`` is floored at ``AIC_RSS_FLOOR`` so perfect fits stay finite.
    Raises :class:`InvalidAicError` when n_points <= n_params.
    """
    if n_points <= n_params:
        raise InvalidAicError(
            f"AIC undefined for n_points={n_points} <= n_params={n_params}"
        )
    rss = max(float(rss), AIC_RSS_FLOOR)
    return n_points * math.log(rss / n_points) + 2.0 * n_params


def _check_disjoint(train_pts: np.ndarray, test_pts: np.ndarray) -> None:
    a = {tuple(row) for row in train_pts}
    if any(tuple(row) in a for row in test_pts):
        raise SelectionError("training and testing designs share a point")


def build_and_select(
    model: QoiModel,
    region: ParameterSpace,
    subspace: SubspaceResult,
    n: int,
    train_count: int = DEFAULT_TRAIN_COUNT,
    test_count: int = DEFAULT_TEST_COUNT,
    seed: int = 0,
    subspace_source: Optional[str] = None,
    aic_on: str = "test",
):
    """Fit orders 1-3 on region designs and pick the AIC minimizer.

    Training and testing designs are independently seeded LHS draws from the
    region (disjointness is verified exactly). Under-determined orders are
    excluded; if every order is excluded a :class:`SelectionError` is raised.
    Returns ``(best, candidates)``.
    """
    if aic_on not in ("test", "train"):
        raise ValueError(f"aic_on must be 'test' or 'train', got {aic_on!r}")
    W1 = np.asarray(subspace.eigenvectors[:, :n], dtype=np.float64)
    train_pts = lhs(train_count, region, derive_seed(seed, STREAM_SURROGATE_TRAIN))
    test_pts = lhs(test_count, region, derive_seed(seed, STREAM_SURROGATE_TEST))
    _check_disjoint(train_pts, test_pts)
    q_train = np.asarray(model.evaluate(train_pts), dtype=np.float64)
    q_test = np.asarray(model.evaluate(test_pts), dtype=np.float64)
    Y_train = train_pts @ W1
    Y_test = test_pts @ W1

    candidates = []
    for d in _ALLOWED_ORDERS:
        try:
            fit = fit_polynomial((Y_train, q_train), d)
        except UnderDeterminedError:
            continue
        resid = q_test - fit.predict_y(Y_test)
        test_rss = float(resid @ resid)
        rss_for_aic = test_rss if aic_on == "test" else fit.train_rss
        count_for_aic = test_count if aic_on == "test" else train_count
        try:
            score = aic(rss_for_aic, fit.n_coefficients, count_for_aic)
        except InvalidAicError:
            continue
        candidates.append(
            replace(
                fit,
                subspace_source=subspace_source,
                w1=W1,
                test_rss=test_rss,
                test_count=test_count,
                aic=score,
            )
        )
    if not candidates:
        raise SelectionError(
            f"no admissible polynomial order for n={n} with "
            f"{train_count} training points"
        )
    best = min(candidates, key=lambda s: (s.aic, s.order))
    return best, candidates


@dataclass(frozen=True)
class ComparisonRow:
    """One (active dimension, subspace source) entry of the comparison table."""

    n: int
    source: str
    order: int
    n_coefficients: int
    train_rss: float
    test_rss: float
    aic: float
    rmse: float
    actual: np.ndarray
    predicted: np.ndarray


def compare_global_local(
    model: QoiModel,
    region: ParameterSpace,
    global_sub: SubspaceResult,
    local_sub: SubspaceResult,
    dims: Sequence[int],
    train_count: int = DEFAULT_TRAIN_COUNT,
    test_count: int = DEFAULT_TEST_COUNT,
    seed: int = 0,
    aic_on: str = "test",
    global_region: Optional[ParameterSpace] = None,
) -> list:
    """Selected surrogate accuracy on the region, per active dimension.

    "global" rows are built on ``global_region`` (default: the model's full
    input box) through ``global_sub``; "local" rows are built on ``region``
    through ``local_sub``. Every row's ``rmse`` is computed on the *same*
    region test design, so the comparison is paired point-for-point; each
    row's ``test_rss``/``aic`` remain the selection diagnostics from its own
    training domain. Returns :class:`ComparisonRow` records carrying the
    (actual, predicted) pairs behind the RMSE.
    """
    m = model.dim
    for n in dims:
        if not 1 <= n <= m:
            raise ValueError(f"active dimensions must lie in 1..{m}, got {n}")
    if global_region is None:
        global_region = model.space
    test_pts = lhs(test_count, region, derive_seed(seed, STREAM_SURROGATE_TEST))
    actual = np.asarray(model.evaluate(test_pts), dtype=np.float64)
    rows = []
    for n in dims:
        for source, sub, train_box in (
            ("global", global_sub, global_region),
            ("local", local_sub, region),
        ):
            best, _ = build_and_select(
                model,
                train_box,
                sub,
                n,
                train_count=train_count,
                test_count=test_count,
                seed=seed,
                subspace_source=source,
                aic_on=aic_on,
            )
            predicted = best.predict(test_pts)
            rmse = float(np.sqrt(np.mean((actual - predicted) ** 2)))
            rows.append(
                ComparisonRow(
                    n=n,
                    source=source,
                    order=best.order,
                    n_coefficients=best.n_coefficients,
                    train_rss=best.train_rss,
                    test_rss=best.test_rss,
                    aic=best.aic,
                    rmse=rmse,
                    actual=actual,
                    predicted=predicted,
                )
            )
    return rows
