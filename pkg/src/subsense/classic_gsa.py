"""Classical global sensitivity methods: Morris screening and Sobol' indices.

Both operate on any :class:`~subsense.models.QoiModel` over any box and
express their effects in unit-scaled coordinates, matching the gradient
scaling contract so rankings are comparable across methods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GradientEvaluationError, UndefinedIndicesError
from .models import QoiModel
from .sampling import (
    STREAM_MORRIS,
    STREAM_SOBOL_A,
    STREAM_SOBOL_B,
    ParameterSpace,
    derive_seed,
    lhs,
    rng_from_seed,
)

__all__ = [
    "MorrisResult",
    "SobolResult",
    "morris",
    "sobol",
    "DEFAULT_MORRIS_R",
    "DEFAULT_MORRIS_P",
    "DEFAULT_SOBOL_N",
    "DEFAULT_SOBOL_N_LOCAL",
]

#: Default Morris trajectory count for global analyses.
DEFAULT_MORRIS_R = 100
#: Default Morris level count (must be even).
DEFAULT_MORRIS_P = 8
#: Default Sobol' base sample count for global analyses.
DEFAULT_SOBOL_N = 2**14
#: Default Sobol' base sample count for per-region analyses.
DEFAULT_SOBOL_N_LOCAL = 2**9


@dataclass(frozen=True)
class MorrisResult:
    """Elementary-effect summary statistics per parameter."""

    mu: np.ndarray
    mu_star: np.ndarray
    sigma: np.ndarray
    r: int
    p: int
    n_failed: int = 0

    @property
    def ranking(self) -> np.ndarray:
        """Parameter indices sorted by descending mu_star (ties by index)."""
        return np.argsort(-self.mu_star, kind="stable")


@dataclass(frozen=True)
class SobolResult:
    """First-order and total-effect indices per parameter."""

    first_order: np.ndarray
    total_effect: np.ndarray
    N: int
    n_failed: int = 0

    @property
    def ranking(self) -> np.ndarray:
        """Parameter indices sorted by descending total effect (ties by index)."""
        return np.argsort(-self.total_effect, kind="stable")


def morris(
    model: QoiModel,
    box: ParameterSpace,
    r: int = DEFAULT_MORRIS_R,
    p: int = DEFAULT_MORRIS_P,
    seed: int = 0,
    on_error: str = "raise",
) -> MorrisResult:
    """Morris elementary effects from r randomized one-at-a-time trajectories.

    Trajectories live on a p-level grid of the unit-scaled box with step
    delta = p / (2(p-1)); each trajectory perturbs every parameter once in a
    random order and a random direction, and the signed elementary effect is
    the function change divided by the signed scaled step.

    ``on_error="exclude"`` drops trajectories containing a failed model
    evaluation (non-finite output) and reports the count in ``n_failed``;
    the default raises.
    """
    if p < 2 or p % 2 != 0:
        raise ValueError(f"p must be an even integer >= 2, got {p}")
    if r < 2:
        raise ValueError(f"r must be >= 2, got {r}")
    if on_error not in ("raise", "exclude"):
        raise ValueError(f"on_error must be 'raise' or 'exclude', got {on_error!r}")
    m = model.dim
    if box.dim != m:
        raise ValueError(f"box dimension {box.dim} does not match model dimension {m}")
    delta = p / (2.0 * (p - 1.0))
    rng = rng_from_seed(derive_seed(seed, STREAM_MORRIS))

    # Base components come from the grid levels {0, 1, ..., p/2 - 1}/(p-1) so
    # one +delta step stays inside [0,1]; a negative-direction axis starts
    # shifted up by delta instead.
    base_levels = rng.integers(0, p // 2, size=(r, m)).astype(np.float64) / (p - 1.0)
    directions = np.where(rng.random((r, m)) < 0.5, 1.0, -1.0)
    orders = np.argsort(rng.random((r, m)), axis=1)

    start = base_levels + np.where(directions < 0, delta, 0.0)
    # Trajectory t visits m+1 scaled points; point j flips the first j axes
    # in `orders[t]` by directions * delta.
    pts = np.empty((r, m + 1, m), dtype=np.float64)
    pts[:, 0, :] = start
    cur = start.copy()
    rows = np.arange(r)
    for j in range(m):
        axis = orders[:, j]
        cur = cur.copy()
        cur[rows, axis] += directions[rows, axis] * delta
        pts[:, j + 1, :] = cur

    phys = box.lower[None, None, :] + pts * box.widths[None, None, :]
    f = np.asarray(model.evaluate(phys.reshape(r * (m + 1), m)), dtype=np.float64)
    f = f.reshape(r, m + 1)

    bad_traj = ~np.isfinite(f).all(axis=1)
    if bad_traj.any():
        if on_error == "raise":
            idx = np.nonzero(bad_traj)[0]
            raise GradientEvaluationError(
                f"model evaluation failed on {idx.size} of {r} trajectories "
                f"(first trajectory indices: {idx[:10].tolist()})"
            )
        keep = ~bad_traj
        f = f[keep]
        orders = orders[keep]
        directions = directions[keep]
    n_failed = int(bad_traj.sum())
    r_eff = f.shape[0]
    if r_eff < 2:
        raise UndefinedIndicesError(
            f"fewer than 2 usable trajectories remain ({r_eff}) after exclusions"
        )

    effects = np.empty((r_eff, m), dtype=np.float64)
    rows = np.arange(r_eff)
    for j in range(m):
        axis = orders[:, j]
        step = directions[rows, axis] * delta
        effects[rows, axis] = (f[:, j + 1] - f[:, j]) / step

    mu = effects.mean(axis=0)
    mu_star = np.abs(effects).mean(axis=0)
    sigma = effects.std(axis=0, ddof=1)
    return MorrisResult(mu=mu, mu_star=mu_star, sigma=sigma, r=r_eff, p=p, n_failed=n_failed)


def sobol(
    model: QoiModel,
    box: ParameterSpace,
    N: int = DEFAULT_SOBOL_N,
    seed: int = 0,
    on_error: str = "raise",
) -> SobolResult:
    """Sobol' indices from the Saltelli A/B/AB_i scheme ((m+2)N evaluations).

    First-order indices use the Saltelli (2010) estimator
    S_i = mean(f_B * (f_ABi - f_A)) / V and total effects the Jansen
    estimator S_Ti = mean((f_A - f_ABi)^2) / (2 V), both normalized by the
    variance V of the pooled A/B evaluations. The A and B matrices are two
    independently seeded LHS designs.

    ``on_error="exclude"`` drops sample rows whose A, B, or any AB_i
    evaluation is non-finite, keeping the estimator balanced; the default
    raises. Constant output (zero pooled variance) raises
    :class:`UndefinedIndicesError`.
    """
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    if on_error not in ("raise", "exclude"):
        raise ValueError(f"on_error must be 'raise' or 'exclude', got {on_error!r}")
    m = model.dim
    if box.dim != m:
        raise ValueError(f"box dimension {box.dim} does not match model dimension {m}")

    A = lhs(N, box, derive_seed(seed, STREAM_SOBOL_A))
    B = lhs(N, box, derive_seed(seed, STREAM_SOBOL_B))

    fA = np.asarray(model.evaluate(A), dtype=np.float64)
    fB = np.asarray(model.evaluate(B), dtype=np.float64)
    fAB = np.empty((m, N), dtype=np.float64)
    for i in range(m):
        ABi = A.copy()
        ABi[:, i] = B[:, i]
        fAB[i] = np.asarray(model.evaluate(ABi), dtype=np.float64)

    row_ok = np.isfinite(fA) & np.isfinite(fB) & np.isfinite(fAB).all(axis=0)
    n_failed = int((~row_ok).sum())
    if n_failed:
        if on_error == "raise":
            idx = np.nonzero(~row_ok)[0]
            raise GradientEvaluationError(
                f"model evaluation failed on {n_failed} of {N} sample rows "
                f"(first row indices: {idx[:10].tolist()})"
            )
        fA = fA[row_ok]
        fB = fB[row_ok]
        fAB = fAB[:, row_ok]
    n_eff = fA.shape[0]
    if n_eff < 2:
        raise UndefinedIndicesError(
            f"fewer than 2 usable sample rows remain ({n_eff}) after exclusions"
        )

    pooled = np.concatenate([fA, fB])
    V = pooled.var()
    if V <= 0.0:
        raise UndefinedIndicesError("output variance is zero; Sobol' indices are undefined")

    first = (fB[None, :] * (fAB - fA[None, :])).mean(axis=1) / V
    total = 0.5 * ((fA[None, :] - fAB) ** 2).mean(axis=1) / V
    return SobolResult(first_order=first, total_effect=total, N=N, n_failed=n_failed)
