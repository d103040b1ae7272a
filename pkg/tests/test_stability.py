import numpy as np
import pytest

from subsense.errors import DegenerateSpectrumError
from subsense.models import QoiModel, get_model
from subsense.sampling import ParameterSpace, RegionGrid, SamplingPlan
from subsense.stability import (
    LocalAnalysis,
    RegionFailure,
    analyze_region,
    census,
    distance_map,
    global_analysis,
    growth_scenarios,
    restricted_eigenstudy,
    sweep,
    topk_membership,
)
from tests.conftest import unit_box


@pytest.fixture(scope="module")
def f3_setup():
    model = get_model("f3")
    g = global_analysis(model, model.space, M_total=4000, seed=7)
    grid = RegionGrid(model.space, 6)
    plan = SamplingPlan(M=10, master_seed=7)
    analyses = [
        a
        for a in sweep(model, grid, plan, g.subspace, n=g.subspace.n)
        if isinstance(a, LocalAnalysis)
    ]
    return model, g, grid, plan, analyses


def test_global_analysis_structure(f3_setup):
    model, g, _, _, _ = f3_setup
    assert g.region_index == -1
    assert g.distance_to_global == 0.0
    assert g.subspace.n == 1  # strong spectral gap for this model
    assert g.scores.ranking.tolist() == [1, 0]  # x2 dominates globally
    W = g.subspace.eigenvectors
    assert np.abs(W.T @ W - np.eye(2)).max() < 1e-12


def test_global_analysis_with_methods():
    model = get_model("f1")
    g = global_analysis(
        model, model.space, M_total=500, seed=0, methods=("morris", "sobol"),
        morris_r=20, sobol_n=256,
    )
    assert g.morris is not None and g.sobol is not None
    assert g.morris.ranking[0] == 0 and g.sobol.ranking[0] == 0
    assert g.ranking_for("morris") == (0, 1)
    assert g.ranking_for("sobol") == (0, 1)
    assert g.ranking_for("activity") == tuple(g.scores.ranking)


def test_global_analysis_n_override():
    model = get_model("f3")
    g = global_analysis(model, model.space, M_total=500, seed=0, n_override=2)
    assert g.subspace.n == 2


def test_analyze_region_matches_sweep(f3_setup):
    model, g, grid, plan, analyses = f3_setup
    single = analyze_region(model, grid, 14, plan, g.subspace, n=g.subspace.n)
    from_sweep = next(a for a in analyses if a.region_index == 14)
    assert np.array_equal(single.subspace.eigenvalues, from_sweep.subspace.eigenvalues)
    assert single.distance_to_global == from_sweep.distance_to_global
    assert 0.0 <= single.distance_to_global <= 1.0


def test_sweep_covers_all_regions_once(f3_setup):
    _, _, grid, _, analyses = f3_setup
    indices = [a.region_index for a in analyses]
    assert sorted(indices) == list(range(grid.total_regions))


def test_sweep_chunk_size_is_invisible(f3_setup):
    model, g, grid, plan, analyses = f3_setup
    small_chunks = [
        a
        for a in sweep(model, grid, plan, g.subspace, n=g.subspace.n, chunk_size=5)
        if isinstance(a, LocalAnalysis)
    ]
    for a, b in zip(analyses, small_chunks):
        assert a.region_index == b.region_index
        assert np.array_equal(a.scores.raw, b.scores.raw)
        assert a.distance_to_global == b.distance_to_global


def test_sweep_region_subset(f3_setup):
    model, g, grid, plan, _ = f3_setup
    subset = [3, 8, 20]
    out = list(sweep(model, grid, plan, g.subspace, n=1, region_indices=subset))
    assert [a.region_index for a in out] == subset


def test_sweep_reports_failures():
    # A model with NaN output in the lower-left corner: those regions fail.
    def evaluate(X):
        X = np.atleast_2d(X)
        out = np.exp(X[:, 0] + X[:, 1])
        return np.where((X[:, 0] < 0.25) & (X[:, 1] < 0.25), np.nan, out)

    box = unit_box(2)
    model = QoiModel(name="holed", dim=2, evaluate=evaluate, space=box)
    g_ref = global_analysis(get_model("f1"), box, M_total=200, seed=1)
    grid = RegionGrid(box, 4)
    plan = SamplingPlan(M=8, master_seed=1)
    out = list(sweep(model, grid, plan, g_ref.subspace, n=1))
    failures = [o for o in out if isinstance(o, RegionFailure)]
    assert len(out) == grid.total_regions
    assert failures, "corner regions should fail"
    assert all(isinstance(f.reason, str) and f.reason for f in failures)
    with pytest.raises(DegenerateSpectrumError):
        analyze_region(model, grid, failures[0].region_index, plan, g_ref.subspace, n=1)


def test_census_counts_and_global_position(f3_setup):
    _, g, grid, _, analyses = f3_setup
    cen = census(analyses, "activity", global_ranking=g.scores.ranking)
    assert sum(cen.counts.values()) == grid.total_regions
    assert cen.unique_count == len(cen.counts)
    top = cen.top(cen.unique_count)
    assert [c for _, c in top] == sorted(cen.counts.values(), reverse=True)
    if cen.global_ranking_position is not None:
        ranking_tuple = tuple(g.scores.ranking)
        assert cen.global_ranking_frequency == cen.counts[ranking_tuple]
        assert top[cen.global_ranking_position - 1][1] == cen.global_ranking_frequency


def test_topk_membership_monotone(f3_setup):
    _, _, _, _, analyses = f3_setup
    top1 = topk_membership(analyses, 1, ("activity",))["activity"]
    top2 = topk_membership(analyses, 2, ("activity",))["activity"]
    assert top1.shape == (2,)
    assert np.all(top1 >= 0) and np.all(top1 <= 100)
    assert np.all(top2 >= top1)  # top-1 membership implies top-2 membership
    assert top1.sum() == pytest.approx(100.0)  # exactly one top-1 per region
    assert np.allclose(top2, 100.0)  # with m=2, every parameter is in the top 2


def test_distance_map_shape_and_counts(f3_setup):
    _, _, grid, _, analyses = f3_setup
    dmap = distance_map(analyses, grid)
    assert dmap.means.shape == (2, 6)
    assert dmap.counts.shape == (2, 6)
    # Every region lands in exactly one bin per axis.
    assert np.all(dmap.counts.sum(axis=1) == grid.total_regions)
    assert np.all((dmap.means >= 0) & (dmap.means <= 1))


def test_sweep_excluded_counter():
    # The LV model on the admissible box evaluates everywhere, so no points
    # are excluded in a small sweep.
    model = get_model("lotka-volterra")
    g = global_analysis(model, model.space, M_total=300, seed=3)
    grid = RegionGrid(model.space, 2)
    plan = SamplingPlan(M=5, master_seed=3)
    out = [
        a for a in sweep(model, grid, plan, g.subspace, n=g.subspace.n,
                         region_indices=[0, 1, 2])
        if isinstance(a, LocalAnalysis)
    ]
    assert len(out) == 3
    assert all(a.n_excluded == 0 for a in out)


def test_growth_scenarios_boxes():
    space = get_model("lotka-volterra").space
    boxes = growth_scenarios(space, threshold=0.125)
    small, large, full = boxes["small-growth"], boxes["large-growth"], boxes["full"]
    assert np.allclose(small.upper[:2], 0.125) and np.allclose(small.lower[:2], 0.0)
    assert np.allclose(large.lower[:2], 0.125) and np.allclose(large.upper[:2], 1.0)
    # Non-growth axes stay full-range in both restrictions.
    assert np.allclose(small.upper[2:], 1.0) and np.allclose(large.lower[2:], 0.0)
    assert full is space


def test_restricted_eigenstudy_full_matches_global():
    model = get_model("f3")
    scenarios = {"full": model.space}
    study = restricted_eigenstudy(model, scenarios, M_total=800, seed=5)
    direct = global_analysis(model, model.space, M_total=800, seed=5)
    assert np.array_equal(study["full"]["eigenvalues"], direct.subspace.eigenvalues)
    assert study["full"]["w1_squared"].sum() == pytest.approx(1.0)
