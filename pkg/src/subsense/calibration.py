"""Subset-restricted Bayesian calibration of the tumor-growth model.

Per region, synthetic data is the noiseless QoI at a parameter vector drawn
uniformly from the region. Calibration frees only the top-k parameters of a
chosen ranking (the rest sit at the midpoint of their admissible ranges) and
runs an adaptive-Metropolis chain with one delayed-rejection stage over the
free parameters' full admissible ranges. The global-vs-local experiment runs
both subset choices against the same data with identical proposal-noise
streams, so the error difference is attributable to the subset alone.

Free subsets are stored sorted, which makes equal-as-sets subsets identical
tasks; with paired noise those produce bit-identical chains and the
comparison is an exact tie.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateParameterError, SubsenseError
from .models import LvParams, get_model, lv_qoi
from .sampling import (
    STREAM_CHAIN_NOISE,
    STREAM_REGION_SUBSAMPLE,
    STREAM_TRUE_PARAMS,
    ParameterSpace,
    RegionGrid,
    derive_seed,
    rng_from_seed,
)

__all__ = [
    "CalibrationTask",
    "ChainResult",
    "SubsetComparison",
    "SweepResult",
    "make_task",
    "adaptive_metropolis",
    "compare_subsets",
    "experiment_sweep",
    "rankings_from_analyses",
    "DEFAULT_ITERATIONS",
    "DEFAULT_BURN_IN",
    "DEFAULT_ADAPT_START",
    "DEFAULT_S_FRAC",
    "DEFAULT_TIE_TOL",
]

#: Chain budget defaults: total iterations and discarded warm-up states.
DEFAULT_ITERATIONS = 5000
DEFAULT_BURN_IN = 1000

#: Proposal-covariance adaptation begins after this many stored states.
DEFAULT_ADAPT_START = 200

#: Likelihood scale as a fraction of the data QoI.
DEFAULT_S_FRAC = 0.01

#: Near-tie threshold for the winner call, in units of s^2 (the squared
#: likelihood scale): when both subsets drive the squared QoI misfit to the
#: chain-noise floor, the difference carries no signal.
DEFAULT_TIE_TOL = 1.0


@dataclass(frozen=True)
class CalibrationTask:
    """One region's synthetic-data calibration problem."""

    region_index: int
    true_params: LvParams
    data_qoi: float
    k: int
    free_subset: tuple
    fixed_values: np.ndarray

    def __post_init__(self):
        if len(self.free_subset) != self.k:
            raise ValueError(
                f"free_subset has {len(self.free_subset)} entries, expected k={self.k}"
            )


@dataclass(frozen=True)
class ChainResult:
    """Stored (post-burn-in) chain states and best-fit summary."""

    samples: np.ndarray
    logpost: np.ndarray
    acceptance_rate: float
    best_fit: np.ndarray
    fit_error: float
    s: float
    n_eval: int
    n_fail: int
    warnings: tuple = ()

    @property
    def fit_errors(self) -> np.ndarray:
        """Squared QoI misfit at every stored state."""
        return -2.0 * self.s * self.s * self.logpost


def make_task(
    region: ParameterSpace,
    region_index: int,
    k: int,
    ranking: Sequence[int],
    seed: int,
) -> CalibrationTask:
    """Draw a region's truth and restrict calibration to a ranking's top k.

    The truth is uniform over the region, derived from (seed, region_index)
    only — the same region yields the same truth for every ranking and every
    k, so comparisons share their data. Free parameters are the first k of
    ``ranking`` (stored sorted); the rest are fixed at the midpoint of their
    admissible ranges.
    """
    model = get_model("lotka-volterra")
    m = model.dim
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in 1..{m}, got {k}")
    ranking = np.asarray(ranking, dtype=np.int64)
    if ranking.shape[0] < k or len(set(ranking[:k].tolist())) != k:
        raise ValueError(f"ranking must supply k={k} distinct indices")
    rng = rng_from_seed(derive_seed(derive_seed(seed, STREAM_TRUE_PARAMS), region_index))
    truth = region.lower + rng.random(m) * (region.upper - region.lower)
    true_params = LvParams.from_array(truth)
    data_qoi = lv_qoi(true_params)
    fixed = 0.5 * (model.space.lower + model.space.upper)
    return CalibrationTask(
        region_index=int(region_index),
        true_params=true_params,
        data_qoi=float(data_qoi),
        k=int(k),
        free_subset=tuple(int(i) for i in sorted(ranking[:k].tolist())),
        fixed_values=fixed,
    )


def adaptive_metropolis(
    task: CalibrationTask,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    burn_in: int = DEFAULT_BURN_IN,
    s: Optional[float] = None,
    s_frac: float = DEFAULT_S_FRAC,
    adapt_start: int = DEFAULT_ADAPT_START,
    dr_scale: float = _kernels.AM_DR_SCALE,
) -> ChainResult:
    """Run the adaptive-Metropolis/delayed-rejection chain for one task.

    The target is exp(-(data_qoi - qoi(theta))^2 / (2 s^2)) with uniform
    priors over each free parameter's full admissible range; ``s`` defaults
    to ``s_frac * data_qoi``. ``seed`` fully determines the proposal-noise
    stream; out-of-range proposals are rejected without a model evaluation,
    and model failures at a proposal count as rejections (``n_fail``).

    Stored states are those after ``burn_in``; ``best_fit`` minimizes the
    squared QoI misfit over the stored states.
    """
    model = get_model("lotka-volterra")
    if iterations < burn_in + adapt_start:
        raise ValueError(
            f"iterations={iterations} must cover burn_in+adapt_start="
            f"{burn_in + adapt_start}"
        )
    if s is None:
        s = s_frac * abs(task.data_qoi)
    if not s > 0.0:
        raise ValueError(f"likelihood scale must be positive, got s={s}")
    subset = np.asarray(task.free_subset, dtype=np.int64)
    lo = model.space.lower[subset]
    hi = model.space.upper[subset]
    base = np.asarray(task.fixed_values, dtype=np.float64).copy()
    init = 0.5 * (lo + hi)
    noise_root = derive_seed(seed, STREAM_CHAIN_NOISE)
    normals = rng_from_seed(derive_seed(noise_root, 1)).standard_normal(
        (iterations, 2, subset.shape[0])
    )
    unifs = rng_from_seed(derive_seed(noise_root, 2)).random((iterations, 2))
    res = _kernels.am_chain_lv(
        lo,
        hi,
        subset,
        base,
        task.data_qoi,
        float(s),
        init,
        normals,
        unifs,
        adapt_start=adapt_start,
        dr_scale=dr_scale,
    )
    samples = res["samples"]
    logpost = res["logpost"]
    moved = np.any(samples[1:] != samples[:-1], axis=1)
    warnings = ()
    if not moved[adapt_start:].any():
        warnings = ("zero acceptance after adaptation start",)
    stored = samples[burn_in:]
    lp_stored = logpost[burn_in:]
    best = int(np.argmax(lp_stored))
    fit_error = max(0.0, float(-2.0 * s * s * lp_stored[best]))
    return ChainResult(
        samples=stored,
        logpost=lp_stored,
        acceptance_rate=res["n_accept"] / iterations,
        best_fit=stored[best].copy(),
        fit_error=fit_error,
        s=float(s),
        n_eval=res["n_eval"],
        n_fail=res["n_fail"],
        warnings=warnings,
    )


@dataclass(frozen=True)
class SubsetComparison:
    """Paired global-vs-local calibration outcome for one (region, k)."""

    region_index: int
    k: int
    subset_global: tuple
    subset_local: tuple
    err_global: float
    err_local: float
    winner: str
    diff: float
    equal_sets: bool
    acceptance_global: float
    acceptance_local: float


def _chain_seed(seed: int, region_index: int, k: int) -> int:
    return derive_seed(derive_seed(derive_seed(seed, STREAM_CHAIN_NOISE), region_index), k)


def compare_subsets(
    region: ParameterSpace,
    region_index: int,
    k: int,
    global_ranking: Sequence[int],
    local_ranking: Sequence[int],
    seed: int,
    iterations: int = DEFAULT_ITERATIONS,
    burn_in: int = DEFAULT_BURN_IN,
    s_frac: float = DEFAULT_S_FRAC,
    tie_tol: float = DEFAULT_TIE_TOL,
    adapt_start: int = DEFAULT_ADAPT_START,
) -> SubsetComparison:
    """Calibrate one region twice — global top-k vs local top-k — and score.

    Both sides share the data and the proposal-noise stream (derived from
    (seed, region, k), never from the side). Equal-as-sets subsets are
    identical problems and run a single chain. The winner is the side with
    the smaller best-fit squared misfit; differences within ``tie_tol * s^2``
    are ties (both fits reached the chain-noise floor).
    """
    task_g = make_task(region, region_index, k, global_ranking, seed)
    cs = _chain_seed(seed, region_index, k)
    if tuple(sorted(local_ranking[:k])) == task_g.free_subset:
        res = adaptive_metropolis(
            task_g, iterations, cs, burn_in, s_frac=s_frac, adapt_start=adapt_start
        )
        return SubsetComparison(
            region_index=region_index,
            k=k,
            subset_global=task_g.free_subset,
            subset_local=task_g.free_subset,
            err_global=res.fit_error,
            err_local=res.fit_error,
            winner="tie",
            diff=0.0,
            equal_sets=True,
            acceptance_global=res.acceptance_rate,
            acceptance_local=res.acceptance_rate,
        )
    task_l = make_task(region, region_index, k, local_ranking, seed)
    res_g = adaptive_metropolis(
        task_g, iterations, cs, burn_in, s_frac=s_frac, adapt_start=adapt_start
    )
    res_l = adaptive_metropolis(
        task_l, iterations, cs, burn_in, s_frac=s_frac, adapt_start=adapt_start
    )
    diff = res_g.fit_error - res_l.fit_error
    if abs(diff) <= tie_tol * res_g.s * res_g.s:
        winner = "tie"
    elif diff > 0.0:
        winner = "local"
    else:
        winner = "global"
    return SubsetComparison(
        region_index=region_index,
        k=k,
        subset_global=task_g.free_subset,
        subset_local=task_l.free_subset,
        err_global=res_g.fit_error,
        err_local=res_l.fit_error,
        winner=winner,
        diff=diff,
        equal_sets=False,
        acceptance_global=res_g.acceptance_rate,
        acceptance_local=res_l.acceptance_rate,
    )


@dataclass(frozen=True)
class SweepFailure:
    """A (region, k) comparison that could not be completed."""

    region_index: int
    k: int
    reason: str


@dataclass(frozen=True)
class SweepResult:
    """All comparisons of a calibration sweep plus per-k win rates."""

    records: tuple
    failures: tuple
    k_values: tuple
    region_indices: tuple
    seed: int

    def win_rates(self) -> dict:
        """Per-k percentages of local wins, global wins, and ties."""
        out = {}
        for k in self.k_values:
            recs = [r for r in self.records if r.k == k]
            n = len(recs)
            if n == 0:
                out[k] = {"local": 0.0, "global": 0.0, "tie": 0.0, "count": 0}
                continue
            out[k] = {
                "local": 100.0 * sum(r.winner == "local" for r in recs) / n,
                "global": 100.0 * sum(r.winner == "global" for r in recs) / n,
                "tie": 100.0 * sum(r.winner == "tie" for r in recs) / n,
                "count": n,
            }
        return out

    def error_differences(self, k: int) -> np.ndarray:
        """Signed err_global - err_local over a k's completed comparisons."""
        return np.array([r.diff for r in self.records if r.k == k])


def rankings_from_analyses(analyses) -> dict:
    """Map region index -> activity-score ranking from stability results."""
    out = {}
    for a in analyses:
        ranking = getattr(getattr(a, "scores", None), "ranking", None)
        if ranking is not None:
            out[int(a.region_index)] = np.asarray(ranking, dtype=np.int64)
    return out


def experiment_sweep(
    grid: RegionGrid,
    global_ranking: Sequence[int],
    local_rankings: Mapping[int, Sequence[int]],
    k_values: Sequence[int],
    seed: int,
    n_regions: Optional[int] = 500,
    iterations: int = DEFAULT_ITERATIONS,
    burn_in: int = DEFAULT_BURN_IN,
    s_frac: float = DEFAULT_S_FRAC,
    tie_tol: float = DEFAULT_TIE_TOL,
    adapt_start: int = DEFAULT_ADAPT_START,
) -> SweepResult:
    """Run the paired-subset experiment over subsampled regions and all k.

    Regions are drawn without replacement from those with a local ranking
    (all of them when ``n_regions`` is None or exceeds the supply). Failures
    are recorded and excluded; everything is deterministic in ``seed``.
    """
    available = np.array(sorted(int(i) for i in local_rankings.keys()), dtype=np.int64)
    if available.size == 0:
        raise SubsenseError("no regions with local rankings supplied")
    if n_regions is None or n_regions >= available.size:
        chosen = available
    else:
        rng = rng_from_seed(derive_seed(seed, STREAM_REGION_SUBSAMPLE))
        chosen = np.sort(rng.choice(available, size=int(n_regions), replace=False))
    records = []
    failures = []
    for ridx in chosen.tolist():
        region = grid.region_bounds(ridx)
        local = np.asarray(local_rankings[ridx], dtype=np.int64)
        for k in k_values:
            try:
                records.append(
                    compare_subsets(
                        region,
                        ridx,
                        int(k),
                        global_ranking,
                        local,
                        seed,
                        iterations=iterations,
                        burn_in=burn_in,
                        s_frac=s_frac,
                        tie_tol=tie_tol,
                        adapt_start=adapt_start,
                    )
                )
            except (DegenerateParameterError, SubsenseError) as exc:
                failures.append(SweepFailure(ridx, int(k), str(exc)))
    return SweepResult(
        records=tuple(records),
        failures=tuple(failures),
        k_values=tuple(int(k) for k in k_values),
        region_indices=tuple(chosen.tolist()),
        seed=int(seed),
    )
