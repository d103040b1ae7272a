"""Command-line entry point for all experiments.

Every command is a deterministic function of (config, seed): outputs carry a
provenance comment (tool version, config hash, seed) but no timestamps, so
reruns are byte-identical. Exit codes: 0 success, 1 partial or numerical
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, _kernels
from .activesub import SubspaceResult, eigendecompose
from .calibration import (
    DEFAULT_BURN_IN,
    DEFAULT_ITERATIONS,
    DEFAULT_S_FRAC,
    DEFAULT_TIE_TOL,
    experiment_sweep,
    rankings_from_analyses,
)
from .classic_gsa import (
    DEFAULT_MORRIS_P,
    DEFAULT_MORRIS_R,
    DEFAULT_SOBOL_N,
)
from .errors import SubsenseError
from .gradients import DEFAULT_FD_STEP, gradient_batch_array
from .models import MODELS, get_model
from .sampling import (
    STREAM_LOCAL_SUBSPACE,
    STREAM_REGION_SUBSAMPLE,
    ParameterSpace,
    RegionGrid,
    SamplingPlan,
    derive_seed,
    lhs,
    rng_from_seed,
)
from .stability import (
    LocalAnalysis,
    RegionFailure,
    census,
    distance_map,
    global_analysis,
    sweep,
    topk_membership,
)
from .surrogate import (
    DEFAULT_TEST_COUNT,
    DEFAULT_TRAIN_COUNT,
    compare_global_local,
)

__all__ = ["RunConfig", "main"]

_ENV_OUTPUT_DIR = "SUBSENSE_OUTPUT_DIR"


class UsageError(Exception):
    """Invalid configuration or arguments; maps to exit code 2."""


@dataclass
class RunConfig:
    """Validated settings for one command invocation."""

    command: str = ""
    model: str = "lotka-volterra"
    seed: int = 0
    output_dir: str = ""
    workers: int = 0
    grid_k: int = 8
    region_samples: int = 10
    samples: int = 100_000
    n: str = "auto"
    methods: tuple = ("activity",)
    morris_r: int = DEFAULT_MORRIS_R
    morris_p: int = DEFAULT_MORRIS_P
    sobol_n: int = DEFAULT_SOBOL_N
    fd_step: float = DEFAULT_FD_STEP
    resume: bool = False
    chunk_size: int = 512
    region: str = ""
    dims: tuple = (1, 2, 3, 4, 5)
    train: int = DEFAULT_TRAIN_COUNT
    test: int = DEFAULT_TEST_COUNT
    local_samples: int = 2000
    aic_on: str = "test"
    regions: int = 500
    k_values: tuple = (1, 2, 3, 4, 5, 6)
    iterations: int = DEFAULT_ITERATIONS
    burn_in: int = DEFAULT_BURN_IN
    s_frac: float = DEFAULT_S_FRAC
    tie_tol: float = DEFAULT_TIE_TOL
    grad_grid: int = 20

    def validate(self) -> None:
        problems = []
        if self.model not in MODELS:
            problems.append(
                f"model: unknown {self.model!r}, expected one of {sorted(MODELS)}"
            )
        if self.seed < 0:
            problems.append(f"seed: must be >= 0, got {self.seed}")
        if self.samples < 1:
            problems.append(f"samples: must be >= 1, got {self.samples}")
        if self.region_samples < 1:
            problems.append(f"region_samples: must be >= 1, got {self.region_samples}")
        if self.grid_k < 1:
            problems.append(f"grid_k: must be >= 1, got {self.grid_k}")
        if self.n != "auto":
            try:
                v = int(self.n)
            except ValueError:
                problems.append(f"n: must be 'auto' or an integer, got {self.n!r}")
            else:
                if v < 1:
                    problems.append(f"n: must be >= 1, got {v}")
        bad = set(self.methods) - {"activity", "morris", "sobol"}
        if bad:
            problems.append(f"methods: unknown {sorted(bad)}")
        if self.aic_on not in ("test", "train"):
            problems.append(f"aic_on: must be 'test' or 'train', got {self.aic_on!r}")
        if self.workers < 0:
            problems.append(f"workers: must be >= 0, got {self.workers}")
        if any(k < 1 for k in self.k_values):
            problems.append(f"k_values: entries must be >= 1, got {self.k_values}")
        if any(d < 1 for d in self.dims):
            problems.append(f"dims: entries must be >= 1, got {self.dims}")
        if problems:
            raise UsageError("invalid configuration:\n  " + "\n  ".join(problems))

    @property
    def n_override(self) -> Optional[int]:
        return None if self.n == "auto" else int(self.n)

    # Process-level knobs: they change where/how work happens, never the
    # numbers, so the provenance hash ignores them (a resumed run must end
    # with files byte-identical to an uninterrupted one).
    _NON_SEMANTIC = frozenset({"output_dir", "workers", "resume", "chunk_size"})

    def effective_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def config_hash(self) -> str:
        semantic = {
            k: v for k, v in self.effective_dict().items()
            if k not in self._NON_SEMANTIC
        }
        blob = json.dumps(semantic, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _provenance(config: RunConfig) -> str:
    return f"# subsense {__version__} config={config.config_hash()} seed={config.seed}"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_csv(path: Path, config: RunConfig, header: Sequence[str], rows) -> None:
    lines = [_provenance(config), ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, config: RunConfig, payload: dict) -> None:
    doc = {"provenance": {"tool": f"subsense {__version__}",
                          "config": config.config_hash(),
                          "seed": config.seed}}
    doc.update(payload)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _ranking_str(names, ranking) -> str:
    return ">".join(names[i] for i in ranking)


# ---------------------------------------------------------------------------
# global
# ---------------------------------------------------------------------------


def cmd_global(config: RunConfig, out: Path) -> int:
    model = get_model(config.model)
    res = global_analysis(
        model,
        model.space,
        M_total=config.samples,
        seed=config.seed,
        n_override=config.n_override,
        h=config.fd_step,
        methods=[m for m in config.methods if m in ("morris", "sobol")],
        morris_r=config.morris_r,
        morris_p=config.morris_p,
        sobol_n=config.sobol_n,
    )
    names = model.space.names
    rows = []
    for i, name in enumerate(names):
        row = [name, res.scores.normalized[i], res.scores.raw[i]]
        if res.morris is not None:
            row += [res.morris.mu[i], res.morris.mu_star[i], res.morris.sigma[i]]
        else:
            row += ["", "", ""]
        if res.sobol is not None:
            row += [res.sobol.first_order[i], res.sobol.total_effect[i]]
        else:
            row += ["", ""]
        rows.append(row)
    _write_csv(
        out / "global_metrics.csv",
        config,
        ["parameter", "activity_normalized", "activity_raw",
         "morris_mu", "morris_mu_star", "morris_sigma",
         "sobol_first", "sobol_total"],
        rows,
    )
    _write_json(
        out / "global_subspace.json",
        config,
        {
            "eigenvalues": res.subspace.eigenvalues.tolist(),
            "eigenvectors": res.subspace.eigenvectors.tolist(),
            "n": int(res.subspace.n),
            "n_excluded": int(res.n_excluded),
            "ranking": [names[i] for i in res.scores.ranking],
        },
    )
    return 0


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

_REGION_HEADER = None  # built per model dimension


def _region_row(model, a: LocalAnalysis) -> list:
    vals = [a.region_index, a.n_excluded, a.distance_to_global]
    vals += list(a.subspace.eigenvalues)
    vals += list(a.scores.normalized)
    vals.append(_ranking_str(model.space.names, a.scores.ranking))
    return vals


def _region_header(model) -> list:
    names = model.space.names
    return (
        ["region_index", "n_excluded", "distance_to_global"]
        + [f"eig{i + 1}" for i in range(model.dim)]
        + [f"score_{n}" for n in names]
        + ["ranking"]
    )


def _load_done_indices(path: Path) -> set:
    done = set()
    if path.exists():
        for line in path.read_text().splitlines():
            if line.startswith("#") or line.startswith("region_index") or not line:
                continue
            done.add(int(line.split(",", 1)[0]))
    return done


def cmd_stability(config: RunConfig, out: Path) -> int:
    model = get_model(config.model)
    grid = RegionGrid(model.space, config.grid_k)
    g = global_analysis(
        model,
        model.space,
        M_total=config.samples,
        seed=config.seed,
        n_override=config.n_override,
        h=config.fd_step,
    )
    n = g.subspace.n
    plan = SamplingPlan(M=config.region_samples, master_seed=config.seed)
    regions_path = out / "regions.csv"
    failures_path = out / "failures.csv"

    done: set = set()
    if config.resume:
        done = _load_done_indices(regions_path) | _load_done_indices(failures_path)
    else:
        for p in (regions_path, failures_path):
            if p.exists():
                p.unlink()
    if not regions_path.exists():
        regions_path.write_text(
            _provenance(config) + "\n" + ",".join(_region_header(model)) + "\n"
        )
    if not failures_path.exists():
        failures_path.write_text(
            _provenance(config) + "\n" + "region_index,reason\n"
        )

    todo = [i for i in range(grid.total_regions) if i not in done]
    methods = [m for m in config.methods if m in ("morris", "sobol")]
    analyses = []
    n_failed = 0
    stream = sweep(
        model,
        grid,
        plan,
        g.subspace,
        n=n,
        methods=methods,
        h=config.fd_step,
        region_indices=todo,
        chunk_size=config.chunk_size,
    )
    buf_rows, buf_fail = [], []

    def flush():
        if buf_rows:
            with regions_path.open("a") as fh:
                fh.write("\n".join(buf_rows) + "\n")
            buf_rows.clear()
        if buf_fail:
            with failures_path.open("a") as fh:
                fh.write("\n".join(buf_fail) + "\n")
            buf_fail.clear()

    for item in stream:
        if isinstance(item, RegionFailure):
            n_failed += 1
            buf_fail.append(f"{item.region_index},{item.reason}")
        else:
            analyses.append(item)
            buf_rows.append(",".join(_fmt(v) for v in _region_row(model, item)))
        if len(buf_rows) + len(buf_fail) >= config.chunk_size:
            flush()
    flush()

    if config.resume and done:
        analyses = _reload_regions(model, grid, plan, g, n, regions_path, config, methods)

    names = model.space.names
    cen = census(analyses, "activity", global_ranking=g.scores.ranking)
    _write_csv(
        out / "census.csv",
        config,
        ["ranking", "count"],
        [[_ranking_str(names, r), c] for r, c in cen.top(len(cen.counts))],
    )
    metrics = ["activity"] + methods
    topk_rows = []
    for k in range(1, model.dim + 1):
        mem = topk_membership(analyses, k, metrics)
        for metric in metrics:
            topk_rows.append([metric, k] + list(mem[metric]))
    _write_csv(
        out / "topk.csv",
        config,
        ["metric", "k"] + [f"pct_{n_}" for n_ in names],
        topk_rows,
    )
    dmap = distance_map(analyses, grid)
    _write_csv(
        out / "distance_map.csv",
        config,
        ["bin"] + list(names),
        [[b] + list(dmap.means[:, b]) for b in range(config.grid_k)],
    )
    total = grid.total_regions
    _write_json(
        out / "summary.json",
        config,
        {
            "unique_count": int(cen.unique_count),
            "total_regions": int(total),
            "analyzed": len(analyses),
            "failed": int(total - len(analyses)),
            "global_ranking": [names[i] for i in g.scores.ranking],
            "global_ranking_position": cen.global_ranking_position,
            "global_ranking_frequency": cen.global_ranking_frequency,
            "active_dimension": int(n),
        },
    )
    return 0 if len(analyses) >= 0.99 * total else 1


def _reload_regions(model, grid, plan, g, n, regions_path, config, methods):
    """After a resumed run, rebuild all analyses from the checkpoint file.

    Aggregations need every region, including those completed by earlier
    runs; recomputing them from the per-region seeds is deterministic and
    avoids parsing floats back out of the CSV.
    """
    done = _load_done_indices(regions_path)
    out = []
    for item in sweep(
        model,
        grid,
        plan,
        g.subspace,
        n=n,
        methods=methods,
        h=config.fd_step,
        region_indices=sorted(done),
        chunk_size=config.chunk_size,
    ):
        if isinstance(item, LocalAnalysis):
            out.append(item)
    return out


# ---------------------------------------------------------------------------
# surrogate
# ---------------------------------------------------------------------------


def _parse_region(spec: str, model) -> ParameterSpace:
    """Accept 'i,j,k,...' grid multi-indices or 'lo:hi,lo:hi,...' bounds."""
    spec = spec.strip()
    if not spec:
        raise UsageError("region: required (multi-index 'i,j,..' or bounds 'lo:hi,..')")
    parts = [p.strip() for p in spec.split(",")]
    if len(parts) != model.dim:
        raise UsageError(
            f"region: expected {model.dim} comma-separated entries, got {len(parts)}"
        )
    if ":" in spec:
        lo, hi = [], []
        for p in parts:
            try:
                a, b = p.split(":")
                lo.append(float(a))
                hi.append(float(b))
            except ValueError as exc:
                raise UsageError(f"region: bad bounds entry {p!r}") from exc
        try:
            return ParameterSpace(
                names=model.space.names, lower=np.array(lo), upper=np.array(hi)
            )
        except SubsenseError as exc:
            raise UsageError(f"region: {exc}") from exc
    try:
        multi = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"region: bad multi-index {spec!r}") from exc
    grid = RegionGrid(model.space, 8)
    try:
        return grid.region_bounds(grid.flat_index(multi))
    except (SubsenseError, ValueError, IndexError) as exc:
        raise UsageError(f"region: {exc}") from exc


def _local_subspace(model, box, region, M, seed, h) -> SubspaceResult:
    pts = lhs(M, region, derive_seed(seed, STREAM_LOCAL_SUBSPACE))
    G, _, bad = gradient_batch_array(model, box, pts, h=h, on_error="exclude")
    if bad.size:
        G = np.delete(G, bad, axis=0)
    C = G.T @ G / G.shape[0]
    return eigendecompose(0.5 * (C + C.T))


def cmd_surrogate(config: RunConfig, out: Path) -> int:
    model = get_model(config.model)
    region = _parse_region(config.region, model)
    g = global_analysis(
        model, model.space, M_total=config.samples, seed=config.seed,
        n_override=config.n_override, h=config.fd_step,
    )
    loc = _local_subspace(
        model, model.space, region, config.local_samples, config.seed, config.fd_step
    )
    dims = [d for d in config.dims if d < model.dim]
    if not dims:
        raise UsageError(f"dims: need at least one value below m={model.dim}")
    rows = compare_global_local(
        model,
        region,
        g.subspace,
        loc,
        dims,
        train_count=config.train,
        test_count=config.test,
        seed=config.seed,
        aic_on=config.aic_on,
    )
    _write_csv(
        out / "surrogate_comparison.csv",
        config,
        ["n", "source", "order", "n_coeffs", "train_rss", "test_rss", "aic", "rmse"],
        [
            [r.n, r.source, r.order, r.n_coefficients, r.train_rss, r.test_rss,
             r.aic, r.rmse]
            for r in rows
        ],
    )
    scatter = []
    for r in rows:
        for a, p in zip(r.actual, r.predicted):
            scatter.append([r.n, r.source, a, p])
    _write_csv(
        out / "surrogate_scatter.csv",
        config,
        ["n", "source", "actual", "predicted"],
        scatter,
    )
    return 0


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


def cmd_calibrate(config: RunConfig, out: Path) -> int:
    model = get_model(config.model)
    if model.name != "lotka-volterra":
        raise UsageError("calibrate: only the lotka-volterra model is supported")
    grid = RegionGrid(model.space, config.grid_k)
    g = global_analysis(
        model, model.space, M_total=config.samples, seed=config.seed,
        n_override=config.n_override, h=config.fd_step,
    )
    total = grid.total_regions
    n_sub = min(config.regions, total)
    if n_sub < total:
        rng = rng_from_seed(derive_seed(config.seed, STREAM_REGION_SUBSAMPLE))
        chosen = np.sort(rng.choice(total, size=n_sub, replace=False))
    else:
        chosen = np.arange(total)
    plan = SamplingPlan(M=config.region_samples, master_seed=config.seed)
    analyses = [
        a
        for a in sweep(
            model, grid, plan, g.subspace, n=g.subspace.n,
            h=config.fd_step, region_indices=chosen, chunk_size=config.chunk_size,
        )
        if isinstance(a, LocalAnalysis)
    ]
    local_rankings = rankings_from_analyses(analyses)
    res = experiment_sweep(
        grid,
        g.scores.ranking,
        local_rankings,
        k_values=config.k_values,
        seed=config.seed,
        n_regions=None,
        iterations=config.iterations,
        burn_in=config.burn_in,
        s_frac=config.s_frac,
        tie_tol=config.tie_tol,
    )
    names = model.space.names
    _write_csv(
        out / "calibration_comparisons.csv",
        config,
        ["region", "k", "subset_global", "subset_local", "err_global", "err_local",
         "winner", "diff"],
        [
            [r.region_index, r.k,
             "|".join(names[i] for i in r.subset_global),
             "|".join(names[i] for i in r.subset_local),
             r.err_global, r.err_local, r.winner, r.diff]
            for r in res.records
        ],
    )
    rates = res.win_rates()
    payload = {"win_rates": {}, "failures": len(res.failures),
               "regions": len(res.region_indices)}
    for k in res.k_values:
        wr = rates[k]
        decided = wr["local"] + wr["global"]
        payload["win_rates"][str(k)] = {
            **wr,
            "local_share_of_decided": (100.0 * wr["local"] / decided) if decided else None,
        }
    _write_json(out / "calibration_winrates.json", config, payload)
    return 0 if not res.failures else 1


# ---------------------------------------------------------------------------
# gradfield
# ---------------------------------------------------------------------------


def cmd_gradfield(config: RunConfig, out: Path) -> int:
    model = get_model(config.model)
    if model.dim != 2:
        raise UsageError(f"gradfield: needs a 2-D model, {model.name} has dim {model.dim}")
    k = config.grad_grid
    centers = (np.arange(k) + 0.5) / k
    box = model.space
    X1, X2 = np.meshgrid(
        box.lower[0] + centers * (box.upper[0] - box.lower[0]),
        box.lower[1] + centers * (box.upper[1] - box.lower[1]),
        indexing="ij",
    )
    pts = np.column_stack([X1.ravel(), X2.ravel()])
    if model.analytic_gradient is not None:
        G = np.asarray(model.analytic_gradient(pts), dtype=np.float64)
    else:
        G, _, _ = gradient_batch_array(model, box, pts, h=config.fd_step)
    norms = np.linalg.norm(G, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    U = G / norms
    g = global_analysis(
        model, box, M_total=config.samples, seed=config.seed, h=config.fd_step
    )
    w1 = g.subspace.eigenvectors[:, 0]
    rows = [[x1, x2, u1, u2, "local"] for (x1, x2), (u1, u2) in zip(pts, U)]
    cx = 0.5 * (box.lower + box.upper)
    rows.append([cx[0], cx[1], w1[0], w1[1], "global"])
    _write_csv(
        out / "gradfield.csv",
        config,
        ["x1", "x2", "gx", "gy", "kind"],
        rows,
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _int_tuple(text: str) -> tuple:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _methods_tuple(text: str) -> tuple:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subsense",
        description="Active-subspace sensitivity analysis and its stability across local regions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument(
            "--model",
            help=f"model name ({', '.join(sorted(MODELS))}; default lotka-volterra)",
        )
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--output-dir", help=f"output directory (default ${_ENV_OUTPUT_DIR} or '.')")
        p.add_argument("--workers", type=int, help="compute threads (0 = all cores)")
        p.add_argument("--n", help="active dimension or 'auto'")
        p.add_argument("--samples", type=int, help="global design size M_total")
        p.add_argument("--fd-step", type=float, dest="fd_step", help="finite-difference step")

    p = sub.add_parser("global", help="global metrics table and subspace")
    common(p)
    p.add_argument("--methods", type=_methods_tuple, help="comma list from: activity,morris,sobol")
    p.add_argument("--morris-r", type=int, dest="morris_r")
    p.add_argument("--morris-p", type=int, dest="morris_p")
    p.add_argument("--sobol-n", type=int, dest="sobol_n")

    p = sub.add_parser("stability", help="per-region sweep, census, distance map")
    common(p)
    p.add_argument("--methods", type=_methods_tuple)
    p.add_argument("--grid-k", type=int, dest="grid_k", help="bins per axis")
    p.add_argument("--region-samples", type=int, dest="region_samples", help="M per region")
    p.add_argument("--resume", action="store_true", default=None,
                   help="continue from an existing regions.csv checkpoint")
    p.add_argument("--chunk-size", type=int, dest="chunk_size")
    p.add_argument("--morris-r", type=int, dest="morris_r")
    p.add_argument("--morris-p", type=int, dest="morris_p")
    p.add_argument("--sobol-n", type=int, dest="sobol_n")

    p = sub.add_parser("surrogate", help="global-vs-local response surfaces on a region")
    common(p)
    p.add_argument("--region", help="grid multi-index 'i,j,..' (8 bins/axis) or bounds 'lo:hi,..'")
    p.add_argument("--dims", type=_int_tuple, help="active dimensions, comma-separated")
    p.add_argument("--train", type=int)
    p.add_argument("--test", type=int)
    p.add_argument("--local-samples", type=int, dest="local_samples",
                   help="gradient samples for the local subspace")
    p.add_argument("--aic-on", dest="aic_on", choices=("test", "train"))

    p = sub.add_parser("calibrate", help="global-vs-local subset calibration sweep")
    common(p)
    p.add_argument("--grid-k", type=int, dest="grid_k")
    p.add_argument("--region-samples", type=int, dest="region_samples")
    p.add_argument("--regions", type=int, help="number of subsampled regions")
    p.add_argument("--k-values", type=_int_tuple, dest="k_values")
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--s-frac", type=float, dest="s_frac")
    p.add_argument("--tie-tol", type=float, dest="tie_tol")
    p.add_argument("--chunk-size", type=int, dest="chunk_size")

    p = sub.add_parser("gradfield", help="normalized gradient directions on a 2-D grid")
    common(p)
    p.add_argument("--grad-grid", type=int, dest="grad_grid", help="grid points per axis")

    return parser


_COMMANDS = {
    "global": cmd_global,
    "stability": cmd_stability,
    "surrogate": cmd_surrogate,
    "calibrate": cmd_calibrate,
    "gradfield": cmd_gradfield,
}


def load_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config: file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config: invalid JSON in {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError(f"config: top level must be an object, got {type(doc).__name__}")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"config: unknown keys {sorted(unknown)}")
        values.update(doc)
    for key, val in vars(args).items():
        if key == "config" or val is None:
            continue
        values[key] = val
    for key in ("methods", "dims", "k_values"):
        if key in values and not isinstance(values[key], tuple):
            values[key] = tuple(values[key])
    if "output_dir" not in values or not values["output_dir"]:
        values["output_dir"] = os.environ.get(_ENV_OUTPUT_DIR, ".")
    if "n" in values:
        values["n"] = str(values["n"])
    config = RunConfig(**values)
    config.validate()
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args)
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if config.workers:
            _kernels.configure_threads(config.workers)
        return _COMMANDS[config.command](config, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SubsenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
