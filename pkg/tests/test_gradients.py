import numpy as np
import pytest

from subsense.errors import GradientEvaluationError
from subsense.gradients import (
    GradientSample,
    central_diff,
    gradient_batch,
    gradient_batch_array,
)
from subsense.models import get_model
from subsense.sampling import ParameterSpace
from tests.conftest import unit_box


@pytest.mark.parametrize("name", ["f1", "f2", "f3"])
def test_fd_matches_analytic_interior(name):
    model = get_model(name)
    rng = np.random.default_rng(1)
    X = 0.1 + 0.8 * rng.random((40, 2))  # interior: central stencil everywhere
    g_fd, _, bad = gradient_batch_array(model, model.space, X, mode="fd")
    g_an, _, _ = gradient_batch_array(model, model.space, X, mode="analytic")
    assert bad.size == 0
    assert np.abs(g_fd - g_an).max() < 1e-6


def test_fd_one_sided_near_boundary():
    model = get_model("f3")
    X = np.array([[0.0, 0.5], [1.0, 0.5], [0.5, 0.0], [0.5, 1.0], [0.0, 0.0]])
    g_fd, _, bad = gradient_batch_array(model, model.space, X, mode="fd")
    g_an, _, _ = gradient_batch_array(model, model.space, X, mode="analytic")
    assert bad.size == 0
    assert np.abs(g_fd - g_an).max() < 1e-6  # reflected stencil keeps O(h^2)


def test_gradients_scale_with_box_widths():
    # The same physical point in a wider reference box yields gradients
    # scaled by the width (unit-coordinate chain rule).
    model = get_model("f1")
    wide = ParameterSpace(names=("x1", "x2"), lower=np.array([0.0, 0.0]), upper=np.array([2.0, 4.0]))
    X = np.array([[0.5, 0.5]])
    g_unit, _, _ = gradient_batch_array(model, model.space, X, mode="analytic")
    g_wide, _, _ = gradient_batch_array(model, wide, X, mode="analytic")
    assert np.allclose(g_wide, g_unit * np.array([2.0, 4.0]))


def test_central_diff_single_point():
    model = get_model("f1")
    g = central_diff(model, model.space, [0.4, 0.6])
    assert np.abs(g - model.analytic_gradient(np.array([0.4, 0.6]))).max() < 1e-6


def test_mode_resolution_and_errors():
    lv = get_model("lotka-volterra")
    with pytest.raises(ValueError):
        gradient_batch_array(lv, lv.space, np.full((1, 6), 0.5), mode="analytic")
    with pytest.raises(ValueError):
        gradient_batch_array(lv, lv.space, np.full((1, 6), 0.5), mode="wrong")
    f1 = get_model("f1")
    with pytest.raises(ValueError):
        gradient_batch_array(f1, f1.space, np.array([[2.0, 0.5]]))  # outside the box
    with pytest.raises(ValueError):
        gradient_batch_array(f1, f1.space, np.zeros((3, 5)))


def test_exclude_vs_raise_on_failures():
    # A model that cannot be evaluated on part of the box: NaN where x1 < 0.3.
    def evaluate(X):
        X = np.atleast_2d(X)
        out = np.where(X[:, 0] < 0.3, np.nan, X[:, 0] + X[:, 1])
        return out

    from subsense.models import QoiModel

    box = unit_box(2)
    model = QoiModel(name="partial", dim=2, evaluate=evaluate, space=box)
    X = np.array([[0.1, 0.5], [0.6, 0.5], [0.2, 0.9], [0.8, 0.1]])
    with pytest.raises(GradientEvaluationError):
        gradient_batch_array(model, box, X, mode="fd", on_error="raise")
    g, _, bad = gradient_batch_array(model, box, X, mode="fd", on_error="exclude")
    assert bad.tolist() == [0, 2]
    assert np.isnan(g[0]).all() and np.isnan(g[2]).all()
    assert np.isfinite(g[[1, 3]]).all()
    samples = gradient_batch(model, box, X, mode="fd", on_error="exclude")
    assert len(samples) == 2
    assert all(isinstance(s, GradientSample) for s in samples)
    assert np.array_equal(samples[0].x, X[1])


def test_chunking_is_invisible():
    model = get_model("f3")
    rng = np.random.default_rng(2)
    X = rng.random((500, 2))
    g_big, _, _ = gradient_batch_array(model, model.space, X, mode="fd", chunk_size=500)
    g_small, _, _ = gradient_batch_array(model, model.space, X, mode="fd", chunk_size=7)
    assert np.array_equal(g_big, g_small)


def test_with_center_returns_values():
    model = get_model("f1")
    X = np.array([[0.2, 0.2], [0.7, 0.7]])
    g, f0, _ = gradient_batch_array(model, model.space, X, mode="fd", with_center=True)
    assert np.allclose(f0, model.evaluate(X))
    samples = gradient_batch(model, model.space, X, with_center=True)
    assert samples[0].f_center == pytest.approx(float(model.evaluate(X[0])))


def test_narrow_box_stencil_error():
    model = get_model("f1")
    sliver = ParameterSpace(
        names=("x1", "x2"), lower=np.array([0.0, 0.0]), upper=np.array([1.0, 1.0])
    )
    with pytest.raises(GradientEvaluationError):
        # An enormous step makes x +- h exit on both sides at once.
        gradient_batch_array(model, sliver, np.array([[0.5, 0.5]]), h=0.6, mode="fd")
