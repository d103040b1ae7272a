"""Gradient evaluation for QoI models.

Gradients are always expressed in unit-scaled coordinates of a reference box
(component i is the derivative with respect to the parameter rescaled to
[0,1]), which makes activity scores comparable across parameters with
different physical ranges. Models with an analytic gradient can be evaluated
exactly; otherwise central finite differences with a configurable scaled step
are used.

Stencil points that would exit the reference box are reflected to one-sided
three-point differences of the same O(h^2) accuracy; the reference box is the
*global* admissible box even when the evaluation points come from a local
subregion, because local analyses measure local behavior of the globally
defined function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GradientEvaluationError
from .models import QoiModel
from .sampling import ParameterSpace

__all__ = [
    "GradientSample",
    "central_diff",
    "gradient_batch",
    "gradient_batch_array",
    "DEFAULT_FD_STEP",
]

#: Default scaled finite-difference step.
DEFAULT_FD_STEP = 1e-5

#: Rows processed per evaluation chunk in the batch path (bounds stencil
#: memory at chunk_size * (2m + 1) model inputs).
DEFAULT_CHUNK_SIZE = 20_000


@dataclass(frozen=True)
class GradientSample:
    """A gradient observation: location, scaled gradient, optional center value."""

    x: np.ndarray
    g: np.ndarray
    f_center: Optional[float] = None


def _resolve_mode(model: QoiModel, mode: str) -> str:
    if mode == "auto":
        return "analytic" if model.analytic_gradient is not None else "fd"
    if mode == "analytic" and model.analytic_gradient is None:
        raise ValueError(f"model {model.name!r} has no analytic gradient")
    if mode not in ("analytic", "fd"):
        raise ValueError(f"mode must be 'auto', 'analytic', or 'fd', got {mode!r}")
    return mode


def _fd_chunk(model, box, X, h, with_center):
    """Finite-difference gradients for one chunk; returns (g, f_center or None)."""
    c, m = X.shape
    scales = box.widths
    hs = h * scales

    # Which axes need a one-sided stencil because x +- h exits the box.
    exceed_up = (X + hs[None, :]) > box.upper[None, :]
    exceed_lo = (X - hs[None, :]) < box.lower[None, :]
    if np.any(exceed_up & exceed_lo):
        raise GradientEvaluationError(
            f"box narrower than the 2h stencil on some axis (h={h}); "
            "reduce h or widen the box"
        )
    onesided = exceed_up | exceed_lo
    sgn = np.where(exceed_up, -1.0, 1.0)

    off1 = np.where(onesided, sgn, 1.0) * hs[None, :]
    off2 = np.where(onesided, 2.0 * sgn, -1.0) * hs[None, :]
    ax = np.arange(m)
    E1 = np.repeat(X[:, None, :], m, axis=1)
    E1[:, ax, ax] += off1
    E2 = np.repeat(X[:, None, :], m, axis=1)
    E2[:, ax, ax] += off2

    F1 = np.asarray(model.evaluate(E1.reshape(c * m, m)), dtype=np.float64).reshape(c, m)
    F2 = np.asarray(model.evaluate(E2.reshape(c * m, m)), dtype=np.float64).reshape(c, m)

    need_center = with_center or bool(onesided.any())
    F0 = None
    if need_center:
        F0 = np.asarray(model.evaluate(X), dtype=np.float64)

    g = (F1 - F2) / (2.0 * h)
    if onesided.any():
        g_os = -sgn * (3.0 * F0[:, None] - 4.0 * F1 + F2) / (2.0 * h)
        g = np.where(onesided, g_os, g)
    return g, (F0 if with_center else None)


def gradient_batch_array(
    model: QoiModel,
    box: ParameterSpace,
    points,
    h: float = DEFAULT_FD_STEP,
    mode: str = "auto",
    with_center: bool = False,
    on_error: str = "raise",
    chunk_size: int = DEFAULT_CHUNK_SIZE,
):
    """Array-valued gradient batch.

    Returns ``(g, f_center, bad)`` where ``g`` is ``(n, m)`` scaled gradients,
    ``f_center`` is ``(n,)`` or None, and ``bad`` is a sorted int array of
    indices whose gradient came out non-finite (their rows are NaN). With
    ``on_error="raise"`` any such point raises
    :class:`GradientEvaluationError` instead; ``on_error="exclude"`` leaves
    the NaN rows in place for the caller to drop.
    """
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, m = X.shape
    if m != model.dim:
        raise ValueError(f"points have dimension {m}, model {model.name!r} expects {model.dim}")
    if box.dim != m:
        raise ValueError(f"box dimension {box.dim} does not match model dimension {m}")
    if on_error not in ("raise", "exclude"):
        raise ValueError(f"on_error must be 'raise' or 'exclude', got {on_error!r}")
    if n == 0:
        return np.empty((0, m)), (np.empty(0) if with_center else None), np.empty(0, dtype=np.int64)
    tol = 1e-12
    if np.any(X < box.lower[None, :] - tol) or np.any(X > box.upper[None, :] + tol):
        raise ValueError("all points must lie inside the reference box")

    mode = _resolve_mode(model, mode)
    if mode == "analytic":
        g = np.asarray(model.analytic_gradient(X), dtype=np.float64) * box.widths[None, :]
        f_center = np.asarray(model.evaluate(X), dtype=np.float64) if with_center else None
    else:
        g = np.empty((n, m), dtype=np.float64)
        f_center = np.empty(n, dtype=np.float64) if with_center else None
        for start in range(0, n, chunk_size):
            stop = min(start + chunk_size, n)
            gc, fc = _fd_chunk(model, box, X[start:stop], h, with_center)
            g[start:stop] = gc
            if with_center:
                f_center[start:stop] = fc

    bad = np.nonzero(~np.isfinite(g).all(axis=1))[0]
    if bad.size and on_error == "raise":
        shown = bad[:10]
        raise GradientEvaluationError(
            f"non-finite gradient at {bad.size} of {n} points "
            f"(first indices: {shown.tolist()})",
            points=X[shown],
            indices=bad,
        )
    return g, f_center, bad


def gradient_batch(
    model: QoiModel,
    box: ParameterSpace,
    points,
    h: float = DEFAULT_FD_STEP,
    mode: str = "auto",
    with_center: bool = False,
    on_error: str = "raise",
) -> list[GradientSample]:
    """Order-preserving list of :class:`GradientSample`, one per input point.

    In FD mode each interior point costs exactly ``2m`` model evaluations
    (plus one shared center evaluation when ``with_center`` is set or a
    one-sided stencil is required). With ``on_error="exclude"`` failed points
    are dropped from the returned list.
    """
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    g, f0, bad = gradient_batch_array(
        model, box, X, h=h, mode=mode, with_center=with_center, on_error=on_error
    )
    out = []
    bad_set = set(bad.tolist())
    for i in range(X.shape[0]):
        if i in bad_set:
            continue
        out.append(
            GradientSample(
                x=X[i].copy(),
                g=g[i].copy(),
                f_center=(float(f0[i]) if f0 is not None else None),
            )
        )
    return out


def central_diff(
    model: QoiModel, box: ParameterSpace, x, h: float = DEFAULT_FD_STEP
) -> np.ndarray:
    """Finite-difference gradient of a single point in scaled coordinates.

    Uses the central stencil at interior points and the one-sided reflection
    near the box boundary; non-finite model output at any stencil point
    raises :class:`GradientEvaluationError` carrying the offending point.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    g, _, _ = gradient_batch_array(model, box, x, h=h, mode="fd", on_error="raise")
    return g[0]
