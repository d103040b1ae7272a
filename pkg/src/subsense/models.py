"""Scalar quantity-of-interest models.

Three analytic two-parameter test functions (exponential families with known
gradients) and a six-parameter competitive Lotka-Volterra system describing
sensitive (S) and resistant (R) tumor subpopulations. The Lotka-Volterra QoI
is the trapezoidal integral of total volume S+R over an eight-week horizon
sampled at day boundaries.

All models are registered by name so callers (and the CLI) can select them
with a string; see :data:`MODELS` and :func:`get_model`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import DegenerateParameterError
from .sampling import ParameterSpace

__all__ = [
    "QoiModel",
    "LvParams",
    "LvState",
    "eval_f1",
    "eval_f2",
    "eval_f3",
    "grad_f1",
    "grad_f2",
    "grad_f3",
    "lv_rhs",
    "lv_solve",
    "lv_qoi",
    "LV_S0",
    "LV_R0",
    "LV_T_END",
    "LV_DT",
    "LV_NSUB_CAP",
    "LV_PARAM_NAMES",
    "MODELS",
    "get_model",
]

# Fixed initial volumes (mm^3): total 0.02 split 9:1 between S and R.
LV_S0 = 0.018
LV_R0 = 0.002
#: Observation horizon in days.
LV_T_END = 56
#: Default RK4 outer step (days).
LV_DT = 0.1
#: Sub-step contract cap; parameter sets needing more are rejected.
LV_NSUB_CAP = 1000

LV_PARAM_NAMES = ("r_S", "r_R", "K_S", "K_R", "gamma_S", "gamma_R")


def _as_batch(x, dim):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ValueError(f"expected a length-{dim} point, got shape {arr.shape}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"expected (n, {dim}) points, got shape {arr.shape}")
    return arr, False


@dataclass(frozen=True)
class QoiModel:
    """A scalar QoI: name, input dimension, evaluator, optional gradient.

    ``evaluate`` and ``analytic_gradient`` accept a single point ``(m,)`` or a
    batch ``(n, m)`` and return a scalar / ``(n,)`` values (gradients: ``(m,)``
    / ``(n, m)``). Evaluation is deterministic: identical inputs give
    bit-identical outputs.
    """

    name: str
    dim: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    analytic_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    space: ParameterSpace = field(repr=False, default=None)


# ---------------------------------------------------------------------------
# Analytic 2-D test functions
# ---------------------------------------------------------------------------


def eval_f1(x):
    """exp(0.7*x1 + 0.3*x2)."""
    X, single = _as_batch(x, 2)
    out = np.exp(0.7 * X[:, 0] + 0.3 * X[:, 1])
    return float(out[0]) if single else out


def grad_f1(x):
    X, single = _as_batch(x, 2)
    f = np.exp(0.7 * X[:, 0] + 0.3 * X[:, 1])
    g = np.stack([0.7 * f, 0.3 * f], axis=1)
    return g[0] if single else g


def eval_f2(x):
    """x1 * exp(0.7*x1 + 0.3*x2)."""
    X, single = _as_batch(x, 2)
    out = X[:, 0] * np.exp(0.7 * X[:, 0] + 0.3 * X[:, 1])
    return float(out[0]) if single else out


def grad_f2(x):
    X, single = _as_batch(x, 2)
    e = np.exp(0.7 * X[:, 0] + 0.3 * X[:, 1])
    g = np.stack([(1.0 + 0.7 * X[:, 0]) * e, 0.3 * X[:, 0] * e], axis=1)
    return g[0] if single else g


def eval_f3(x):
    """exp(0.7*x1^2*x2 + 0.3*x2)."""
    X, single = _as_batch(x, 2)
    out = np.exp(0.7 * X[:, 0] ** 2 * X[:, 1] + 0.3 * X[:, 1])
    return float(out[0]) if single else out


def grad_f3(x):
    X, single = _as_batch(x, 2)
    f = np.exp(0.7 * X[:, 0] ** 2 * X[:, 1] + 0.3 * X[:, 1])
    g = np.stack([1.4 * X[:, 0] * X[:, 1] * f, (0.7 * X[:, 0] ** 2 + 0.3) * f], axis=1)
    return g[0] if single else g


# ---------------------------------------------------------------------------
# Competitive Lotka-Volterra tumor model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LvParams:
    """Growth rates, carrying capacities, and interaction strengths."""

    r_S: float
    r_R: float
    K_S: float
    K_R: float
    gamma_S: float
    gamma_R: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.r_S, self.r_R, self.K_S, self.K_R, self.gamma_S, self.gamma_R],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, arr) -> "LvParams":
        a = np.asarray(arr, dtype=np.float64).reshape(6)
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class LvState:
    """Sensitive and resistant volumes at a time point."""

    S: float
    R: float
    t: float


def _check_capacities(params: LvParams) -> None:
    if params.K_S <= 0.0 or params.K_R <= 0.0:
        raise DegenerateParameterError(
            f"carrying capacities must be positive, got K_S={params.K_S}, K_R={params.K_R}"
        )


def lv_rhs(state: LvState, params: LvParams) -> tuple[float, float]:
    """Right-hand side (dS/dt, dR/dt) of the competitive system."""
    _check_capacities(params)
    S, R = state.S, state.R
    dS = params.r_S * S * (1.0 - S / params.K_S - params.gamma_R * R / params.K_S)
    dR = params.r_R * R * (1.0 - R / params.K_R - params.gamma_S * S / params.K_R)
    return dS, dR


def lv_solve(params: LvParams, t_end: int = LV_T_END, dt: float = LV_DT) -> list[LvState]:
    """RK4 trajectory sampled at integer days 0..t_end (t_end + 1 states).

    The integrator keeps a per-parameter step-size contract (see
    :mod:`subsense._kernels`); parameter sets whose contract cannot be met
    within the sub-step cap raise :class:`DegenerateParameterError`, as do
    non-positive carrying capacities.
    """
    _check_capacities(params)
    if t_end <= 0 or int(t_end) != t_end:
        raise ValueError(f"t_end must be a positive whole number of days, got {t_end}")
    traj, ok = _kernels.lv_trajectory(
        params.as_array(), n_days=int(t_end), dt=dt, nsub_cap=LV_NSUB_CAP, s0=LV_S0, r0=LV_R0
    )
    if not ok:
        raise DegenerateParameterError(
            "step-size contract exceeded the sub-step cap "
            f"({LV_NSUB_CAP}) for params {params}; the carrying capacities are "
            "too small for stable fixed-step integration"
        )
    return [LvState(S=float(traj[d, 0]), R=float(traj[d, 1]), t=float(d)) for d in range(int(t_end) + 1)]


def lv_qoi(params: LvParams) -> float:
    """Trapezoidal integral (1-day bins) of S+R over the 56-day horizon."""
    _check_capacities(params)
    q = _kernels.lv_qoi_batch(
        params.as_array()[None, :], n_days=LV_T_END, dt=LV_DT, nsub_cap=LV_NSUB_CAP, s0=LV_S0, r0=LV_R0
    )[0]
    if not np.isfinite(q):
        raise DegenerateParameterError(
            f"QoI evaluation failed (step-size contract or overflow) for params {params}"
        )
    return float(q)


def _lv_evaluate(x):
    X, single = _as_batch(x, 6)
    out = _kernels.lv_qoi_batch(X, n_days=LV_T_END, dt=LV_DT, nsub_cap=LV_NSUB_CAP, s0=LV_S0, r0=LV_R0)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_UNIT_2D = ParameterSpace(names=("x1", "x2"), lower=np.zeros(2), upper=np.ones(2))
_UNIT_6D = ParameterSpace(names=LV_PARAM_NAMES, lower=np.zeros(6), upper=np.ones(6))

MODELS: dict[str, QoiModel] = {
    "f1": QoiModel(name="f1", dim=2, evaluate=eval_f1, analytic_gradient=grad_f1, space=_UNIT_2D),
    "f2": QoiModel(name="f2", dim=2, evaluate=eval_f2, analytic_gradient=grad_f2, space=_UNIT_2D),
    "f3": QoiModel(name="f3", dim=2, evaluate=eval_f3, analytic_gradient=grad_f3, space=_UNIT_2D),
    "lotka-volterra": QoiModel(
        name="lotka-volterra", dim=6, evaluate=_lv_evaluate, analytic_gradient=None, space=_UNIT_6D
    ),
}


def get_model(name: str) -> QoiModel:
    """Look up a registered model by name."""
    try:
        return MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {sorted(MODELS)}") from None
