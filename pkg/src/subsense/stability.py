"""Stability of global sensitivity conclusions across local subregions.

Sweeps every region of an axis-aligned grid, recomputes the active subspace,
activity scores (and optionally Morris/Sobol' rankings) from a small
per-region design, and compares each local subspace against the global one
with the projector distance. Aggregations: ranking censuses, top-k membership
tables, and per-(parameter, bin) averaged distance maps.

Regions are processed in chunks for vectorization but every region's result
depends only on its own derived seed, so outputs are independent of chunk
size and completion order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .activesub import (
    ActivityScores,
    SubspaceResult,
    eigendecompose_batch,
    select_dimension,
    subspace_distance_batch,
)
from .classic_gsa import (
    DEFAULT_MORRIS_P,
    DEFAULT_SOBOL_N_LOCAL,
    MorrisResult,
    SobolResult,
    morris,
    sobol,
)
from .errors import DegenerateSpectrumError, UndefinedIndicesError
from .gradients import DEFAULT_FD_STEP, gradient_batch_array
from .models import QoiModel
from .sampling import (
    STREAM_GLOBAL_DESIGN,
    STREAM_MORRIS,
    STREAM_SOBOL_A,
    ParameterSpace,
    RegionGrid,
    SamplingPlan,
    derive_seed,
    lhs,
)

__all__ = [
    "LocalAnalysis",
    "RegionFailure",
    "RankingCensus",
    "DistanceMap",
    "analyze_region",
    "global_analysis",
    "sweep",
    "census",
    "topk_membership",
    "distance_map",
    "restricted_eigenstudy",
    "growth_scenarios",
    "DEFAULT_LOCAL_MORRIS_R",
]

#: Default Morris trajectory count for per-region analyses.
DEFAULT_LOCAL_MORRIS_R = 20

#: Regions vectorized per chunk during sweeps.
DEFAULT_REGION_CHUNK = 512


@dataclass(frozen=True)
class LocalAnalysis:
    """One region's subspace, scores, and distance to the global subspace."""

    region_index: int
    subspace: SubspaceResult
    scores: ActivityScores
    distance_to_global: float
    morris: Optional[MorrisResult] = None
    sobol: Optional[SobolResult] = None
    n_excluded: int = 0

    def ranking_for(self, metric: str) -> tuple:
        """Ranking tuple under a metric: 'activity', 'morris', or 'sobol'."""
        if metric == "activity":
            return tuple(int(i) for i in self.scores.ranking)
        if metric == "morris":
            if self.morris is None:
                raise ValueError(f"region {self.region_index} has no Morris result")
            return tuple(int(i) for i in self.morris.ranking)
        if metric == "sobol":
            if self.sobol is None:
                raise ValueError(f"region {self.region_index} has no Sobol result")
            return tuple(int(i) for i in self.sobol.ranking)
        raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class RegionFailure:
    """A region excluded from aggregation, with the reason."""

    region_index: int
    reason: str


@dataclass(frozen=True)
class RankingCensus:
    """Exact frequency tally of ranking permutations across regions."""

    counts: dict
    unique_count: int
    total_regions: int
    n_failed: int
    global_ranking: Optional[tuple] = None
    global_ranking_position: Optional[int] = None
    global_ranking_frequency: int = 0

    def top(self, n: int) -> list:
        """The n most frequent (ranking, count) pairs, deterministic order."""
        items = sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return items[:n]


@dataclass(frozen=True)
class DistanceMap:
    """Mean distance_to_global per (parameter, bin), plus region counts."""

    means: np.ndarray
    counts: np.ndarray
    parameter_names: tuple


def _method_seed(master_seed: int, stream: int, region_index: int) -> int:
    return derive_seed(derive_seed(master_seed, stream), region_index)


def _analyze_chunk(
    model: QoiModel,
    grid: RegionGrid,
    region_indices: np.ndarray,
    plan: SamplingPlan,
    w1_global: Optional[np.ndarray],
    n: int,
    h: float,
    mode: str,
    methods: Sequence[str],
    morris_r: int,
    morris_p: int,
    sobol_n: int,
) -> list:
    """Vectorized analysis of a chunk of regions; returns LocalAnalysis/RegionFailure."""
    R = len(region_indices)
    M = plan.M
    m = model.dim
    pts = np.empty((R, M, m), dtype=np.float64)
    for j, ridx in enumerate(region_indices):
        pts[j] = plan.region_points(grid, int(ridx))

    G, _, _ = gradient_batch_array(
        model, grid.space, pts.reshape(R * M, m), h=h, mode=mode, on_error="exclude"
    )
    G = G.reshape(R, M, m)
    valid = np.isfinite(G).all(axis=2)
    n_excluded = M - valid.sum(axis=1)
    Gz = np.where(valid[:, :, None], G, 0.0)
    M_eff = np.maximum(valid.sum(axis=1), 1)
    Cs = np.einsum("rMi,rMj->rij", Gz, Gz) / M_eff[:, None, None]
    Cs = 0.5 * (Cs + np.swapaxes(Cs, 1, 2))

    vals, vecs, eig_ok = eigendecompose_batch(Cs)
    W1s = vecs[:, :, :n]
    if w1_global is not None:
        dists = subspace_distance_batch(np.ascontiguousarray(W1s), w1_global)
    else:
        dists = np.zeros(R)
    raw = np.einsum("rij,rj->ri", vecs**2, vals)

    out = []
    for j, ridx in enumerate(region_indices):
        ridx = int(ridx)
        if valid[j].sum() == 0:
            out.append(RegionFailure(ridx, "all gradient samples non-finite"))
            continue
        if not eig_ok[j]:
            out.append(RegionFailure(ridx, "eigensolver did not converge"))
            continue
        r = raw[j]
        mx = r.max()
        scores = ActivityScores(
            raw=r,
            normalized=(r / mx if mx > 0 else np.zeros_like(r)),
            ranking=np.argsort(-r, kind="stable"),
        )
        mres = sres = None
        if "morris" in methods or "sobol" in methods:
            box = grid.region_bounds(ridx)
            if "morris" in methods:
                mres = morris(
                    model,
                    box,
                    r=morris_r,
                    p=morris_p,
                    seed=_method_seed(plan.master_seed, STREAM_MORRIS, ridx),
                    on_error="exclude",
                )
            if "sobol" in methods:
                sres = sobol(
                    model,
                    box,
                    N=sobol_n,
                    seed=_method_seed(plan.master_seed, STREAM_SOBOL_A, ridx),
                    on_error="exclude",
                )
        out.append(
            LocalAnalysis(
                region_index=ridx,
                subspace=SubspaceResult(eigenvalues=vals[j], eigenvectors=vecs[j], n=n),
                scores=scores,
                distance_to_global=float(dists[j]),
                morris=mres,
                sobol=sres,
                n_excluded=int(n_excluded[j]),
            )
        )
    return out


def analyze_region(
    model: QoiModel,
    grid: RegionGrid,
    region_index: int,
    plan: SamplingPlan,
    global_subspace: SubspaceResult,
    n: int,
    h: float = DEFAULT_FD_STEP,
    mode: str = "auto",
) -> LocalAnalysis:
    """Subspace, scores, and distance-to-global for a single region.

    Draws the region's seeded LHS design, estimates C-hat from gradients of
    the globally defined model, decomposes it, and measures the spectral
    distance between the first ``n`` local and global eigenvectors.
    """
    if not 1 <= n <= model.dim:
        raise ValueError(f"n must be in 1..{model.dim}, got {n}")
    w1_global = np.ascontiguousarray(global_subspace.eigenvectors[:, :n])
    results = _analyze_chunk(
        model,
        grid,
        np.array([region_index]),
        plan,
        w1_global,
        n,
        h,
        mode,
        methods=(),
        morris_r=DEFAULT_LOCAL_MORRIS_R,
        morris_p=DEFAULT_MORRIS_P,
        sobol_n=DEFAULT_SOBOL_N_LOCAL,
    )
    res = results[0]
    if isinstance(res, RegionFailure):
        raise DegenerateSpectrumError(f"region {region_index}: {res.reason}")
    return res


def global_analysis(
    model: QoiModel,
    box: ParameterSpace,
    M_total: int,
    seed: int,
    n_override: Optional[int] = None,
    h: float = DEFAULT_FD_STEP,
    mode: str = "auto",
    methods: Sequence[str] = (),
    morris_r: int = 100,
    morris_p: int = DEFAULT_MORRIS_P,
    sobol_n: int = 2**14,
) -> LocalAnalysis:
    """Full-box analysis with the same pipeline the regions use.

    The active dimension comes from the spectral-gap heuristic unless
    ``n_override`` is given. Non-finite gradient samples are excluded with
    their count reported in ``n_excluded``; ``distance_to_global`` is 0 by
    definition.
    """
    design = lhs(M_total, box, derive_seed(seed, STREAM_GLOBAL_DESIGN))
    G, _, bad = gradient_batch_array(model, box, design, h=h, mode=mode, on_error="exclude")
    if bad.size:
        G = np.delete(G, bad, axis=0)
    if G.shape[0] == 0:
        raise DegenerateSpectrumError("all gradient samples failed; nothing to analyze")
    M_eff = G.shape[0]
    C = (G.T @ G) / M_eff
    C = 0.5 * (C + C.T)
    vals, vecs, ok = eigendecompose_batch(C[None, :, :])
    if not ok[0]:
        raise DegenerateSpectrumError("eigensolver did not converge on the global matrix")
    lam, W = vals[0], vecs[0]
    n = int(n_override) if n_override is not None else select_dimension(lam)
    raw = (W**2) @ lam
    mx = raw.max()
    scores = ActivityScores(
        raw=raw,
        normalized=(raw / mx if mx > 0 else np.zeros_like(raw)),
        ranking=np.argsort(-raw, kind="stable"),
    )
    mres = sres = None
    if "morris" in methods:
        mres = morris(model, box, r=morris_r, p=morris_p, seed=seed, on_error="exclude")
    if "sobol" in methods:
        sres = sobol(model, box, N=sobol_n, seed=seed, on_error="exclude")
    return LocalAnalysis(
        region_index=-1,
        subspace=SubspaceResult(eigenvalues=lam, eigenvectors=W, n=n),
        scores=scores,
        distance_to_global=0.0,
        morris=mres,
        sobol=sres,
        n_excluded=int(bad.size),
    )


def sweep(
    model: QoiModel,
    grid: RegionGrid,
    plan: SamplingPlan,
    global_subspace: SubspaceResult,
    n: int,
    methods: Sequence[str] = (),
    h: float = DEFAULT_FD_STEP,
    mode: str = "auto",
    region_indices: Optional[Sequence[int]] = None,
    chunk_size: int = DEFAULT_REGION_CHUNK,
    morris_r: int = DEFAULT_LOCAL_MORRIS_R,
    morris_p: int = DEFAULT_MORRIS_P,
    sobol_n: int = DEFAULT_SOBOL_N_LOCAL,
) -> Iterator[Union[LocalAnalysis, RegionFailure]]:
    """Stream one LocalAnalysis (or RegionFailure) per region.

    Regions default to the whole grid in index order; pass ``region_indices``
    to sweep a subset (e.g. for resuming or subsampled runs). Failures do not
    abort the sweep — they are yielded as :class:`RegionFailure` records and
    excluded from aggregations, which report their counts.
    """
    if not 1 <= n <= model.dim:
        raise ValueError(f"n must be in 1..{model.dim}, got {n}")
    w1_global = np.ascontiguousarray(global_subspace.eigenvectors[:, :n])
    if region_indices is None:
        region_indices = range(grid.total_regions)
    idx = np.asarray(list(region_indices), dtype=np.int64)
    for start in range(0, idx.size, chunk_size):
        chunk = idx[start : start + chunk_size]
        yield from _analyze_chunk(
            model,
            grid,
            chunk,
            plan,
            w1_global,
            n,
            h,
            mode,
            methods,
            morris_r,
            morris_p,
            sobol_n,
        )


def census(
    analyses: Iterable,
    metric: str = "activity",
    global_ranking: Optional[Sequence[int]] = None,
) -> RankingCensus:
    """Exact tally of ranking permutations under one metric.

    When ``global_ranking`` is given, its 1-based position among local
    rankings (sorted by descending frequency, ties by permutation order) and
    its frequency are reported.
    """
    counts: dict = {}
    total = 0
    failed = 0
    for a in analyses:
        if isinstance(a, RegionFailure):
            failed += 1
            continue
        key = a.ranking_for(metric)
        counts[key] = counts.get(key, 0) + 1
        total += 1
    gr = tuple(int(i) for i in global_ranking) if global_ranking is not None else None
    position = None
    freq = 0
    if gr is not None:
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        for rank, (key, cnt) in enumerate(ordered, start=1):
            if key == gr:
                position = rank
                freq = cnt
                break
    return RankingCensus(
        counts=counts,
        unique_count=len(counts),
        total_regions=total,
        n_failed=failed,
        global_ranking=gr,
        global_ranking_position=position,
        global_ranking_frequency=freq,
    )


def topk_membership(analyses: Iterable, k: int, metrics: Sequence[str] = ("activity",)) -> dict:
    """Percent of regions where each parameter lands in the first k slots.

    Returns ``{metric: (m,) float array of percentages}``; failed regions are
    excluded from the denominator.
    """
    sums: dict = {met: None for met in metrics}
    total = 0
    for a in analyses:
        if isinstance(a, RegionFailure):
            continue
        total += 1
        for met in metrics:
            ranking = a.ranking_for(met)
            if sums[met] is None:
                sums[met] = np.zeros(len(ranking))
            for slot in range(min(k, len(ranking))):
                sums[met][ranking[slot]] += 1
    if total == 0:
        raise UndefinedIndicesError("no successful analyses to aggregate")
    return {met: 100.0 * sums[met] / total for met in metrics}


def distance_map(analyses: Iterable, grid: RegionGrid) -> DistanceMap:
    """Mean distance_to_global per (parameter, bin) across a sweep."""
    m = grid.space.dim
    k = grid.bins_per_dim
    sums = np.zeros((m, k))
    counts = np.zeros((m, k), dtype=np.int64)
    for a in analyses:
        if isinstance(a, RegionFailure):
            continue
        multi = grid.multi_index(a.region_index)
        for axis in range(m):
            sums[axis, multi[axis]] += a.distance_to_global
            counts[axis, multi[axis]] += 1
    means = np.divide(sums, counts, out=np.full_like(sums, np.nan), where=counts > 0)
    return DistanceMap(means=means, counts=counts, parameter_names=grid.space.names)


def growth_scenarios(space: ParameterSpace, threshold: float = 0.125) -> dict:
    """Small-growth / large-growth / full-space restriction boxes.

    Splits the first two parameters (the growth rates) at ``threshold`` of
    their ranges — small keeps the bottom slice, large keeps everything above
    it — while leaving the other parameters full-range.
    """
    lo, hi = space.lower, space.upper
    w = space.widths
    small_hi = hi.copy()
    small_hi[:2] = lo[:2] + threshold * w[:2]
    large_lo = lo.copy()
    large_lo[:2] = lo[:2] + threshold * w[:2]
    return {
        "small-growth": ParameterSpace(space.names, lo.copy(), small_hi),
        "large-growth": ParameterSpace(space.names, large_lo, hi.copy()),
        "full": space,
    }


def restricted_eigenstudy(
    model: QoiModel,
    scenarios: dict,
    M_total: int,
    seed: int,
    h: float = DEFAULT_FD_STEP,
    mode: str = "auto",
) -> dict:
    """Eigenvalues and leading eigenvector weights per restriction scenario.

    Each scenario is analyzed with the same pipeline and seed derivation as
    :func:`global_analysis` on its own box, so a scenario equal to the full
    box reproduces the full-box analysis bit-exactly. Emits, per scenario,
    the eigenvalue spectrum and the squared components of the first and
    second eigenvectors (the per-parameter weights).
    """
    out = {}
    for name, box in scenarios.items():
        res = global_analysis(model, box, M_total, seed, h=h, mode=mode)
        W = res.subspace.eigenvectors
        out[name] = {
            "eigenvalues": res.subspace.eigenvalues,
            "w1_squared": W[:, 0] ** 2,
            "w2_squared": W[:, 1] ** 2 if W.shape[1] > 1 else np.zeros(W.shape[0]),
            "analysis": res,
        }
    return out
