import math

import numpy as np
import pytest

from subsense import _kernels
from subsense.errors import DegenerateParameterError
from subsense.models import (
    LV_DT,
    LV_R0,
    LV_S0,
    LV_T_END,
    LvParams,
    LvState,
    MODELS,
    eval_f1,
    eval_f2,
    eval_f3,
    get_model,
    grad_f1,
    grad_f2,
    grad_f3,
    lv_qoi,
    lv_rhs,
    lv_solve,
)


def test_f_models_match_formulas():
    rng = np.random.default_rng(0)
    X = rng.random((50, 2))
    assert np.allclose(eval_f1(X), np.exp(0.7 * X[:, 0] + 0.3 * X[:, 1]))
    assert np.allclose(eval_f2(X), X[:, 0] * np.exp(0.7 * X[:, 0] + 0.3 * X[:, 1]))
    assert np.allclose(eval_f3(X), np.exp(0.7 * X[:, 0] ** 2 * X[:, 1] + 0.3 * X[:, 1]))


def test_f_models_scalar_and_batch_agree():
    x = np.array([0.3, 0.8])
    for ev, gr in ((eval_f1, grad_f1), (eval_f2, grad_f2), (eval_f3, grad_f3)):
        assert ev(x) == pytest.approx(ev(x[None, :])[0])
        assert np.allclose(gr(x), gr(x[None, :])[0])


def test_f_model_bad_shapes_raise():
    with pytest.raises(ValueError):
        eval_f1(np.zeros(3))
    with pytest.raises(ValueError):
        grad_f3(np.zeros((4, 5)))


def test_registry_and_lookup():
    assert set(MODELS) == {"f1", "f2", "f3", "lotka-volterra"}
    lv = get_model("lotka-volterra")
    assert lv.dim == 6 and lv.space.names == ("r_S", "r_R", "K_S", "K_R", "gamma_S", "gamma_R")
    with pytest.raises(KeyError):
        get_model("nope")


def test_lv_params_round_trip():
    p = LvParams(0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    assert LvParams.from_array(p.as_array()) == p
    assert p.as_array().shape == (6,)


def test_lv_rhs_signs():
    p = LvParams(r_S=0.5, r_R=0.4, K_S=0.8, K_R=0.9, gamma_S=0.1, gamma_R=0.2)
    dS, dR = lv_rhs(LvState(S=0.01, R=0.01, t=0.0), p)
    assert dS > 0 and dR > 0  # both grow well below capacity
    dS2, _ = lv_rhs(LvState(S=1.5 * p.K_S, R=0.0, t=0.0), p)
    assert dS2 < 0  # above capacity the population shrinks


def test_lv_solve_initial_state_and_length():
    p = LvParams(0.5, 0.5, 0.7, 0.7, 0.3, 0.3)
    traj = lv_solve(p)
    assert len(traj) == LV_T_END + 1
    assert traj[0].S == pytest.approx(LV_S0) and traj[0].R == pytest.approx(LV_R0)
    assert traj[0].t == 0.0 and traj[-1].t == float(LV_T_END)
    assert all(st.S >= 0 and st.R >= 0 for st in traj)


def test_lv_qoi_matches_trapezoid_of_solution():
    p = LvParams(0.9, 0.2, 0.6, 0.9, 0.8, 0.1)
    traj = lv_solve(p)
    total = np.array([st.S + st.R for st in traj])
    assert lv_qoi(p) == pytest.approx(np.trapezoid(total, dx=1.0), rel=1e-12)


def test_lv_scalar_and_batch_evaluate_agree():
    lv = get_model("lotka-volterra")
    rng = np.random.default_rng(3)
    X = rng.random((20, 6))
    batch = lv.evaluate(X)
    singles = np.array([lv_qoi(LvParams.from_array(row)) for row in X])
    assert np.array_equal(batch, singles)


def test_lv_logistic_closed_form_oracle():
    # With zero interaction the populations decouple into logistic growth
    # with known solution K / (1 + (K/x0 - 1) exp(-r t)).
    p = LvParams(r_S=0.8, r_R=0.6, K_S=0.9, K_R=0.5, gamma_S=0.0, gamma_R=0.0)
    traj = lv_solve(p)

    def logistic(x0, r, K, t):
        return K / (1.0 + (K / x0 - 1.0) * math.exp(-r * t))

    for st in traj[1:]:
        assert st.S == pytest.approx(logistic(LV_S0, p.r_S, p.K_S, st.t), rel=1e-6)
        assert st.R == pytest.approx(logistic(LV_R0, p.r_R, p.K_R, st.t), rel=1e-6)


def test_lv_degenerate_capacity_raises():
    with pytest.raises(DegenerateParameterError):
        lv_qoi(LvParams(0.5, 0.5, 0.0, 0.7, 0.1, 0.1))
    with pytest.raises(DegenerateParameterError):
        lv_solve(LvParams(0.5, 0.5, 0.5, -1.0, 0.1, 0.1))


def test_lv_substep_cap_rejects_tiny_capacity():
    # A capacity far below the initial volume forces a sub-step count past
    # the cap; the scalar API raises, the batch API returns NaN.
    bad = LvParams(1.0, 1.0, 1e-6, 0.5, 0.0, 0.0)
    with pytest.raises(DegenerateParameterError):
        lv_qoi(bad)
    q = _kernels.lv_qoi_batch(bad.as_array()[None, :])
    assert np.isnan(q[0])


def test_lv_substep_contract_formula():
    rng = np.random.default_rng(9)
    P = rng.random((100, 6))
    nsub = _kernels.lv_substep_counts(P, LV_DT, s0=LV_S0, r0=LV_R0)
    s_cap = np.maximum(LV_S0, P[:, 2])
    r_cap = np.maximum(LV_R0, P[:, 3])
    lam_s = P[:, 0] * (1.0 + (s_cap + P[:, 5] * r_cap) / P[:, 2])
    lam_r = P[:, 1] * (1.0 + (r_cap + P[:, 4] * s_cap) / P[:, 3])
    expect = np.maximum(1, np.ceil(LV_DT * np.maximum(lam_s, lam_r))).astype(np.int64)
    assert np.array_equal(nsub, expect)
    assert nsub.min() >= 1


def test_lv_evaluate_is_deterministic():
    lv = get_model("lotka-volterra")
    X = np.random.default_rng(4).random((10, 6))
    assert np.array_equal(lv.evaluate(X), lv.evaluate(X))
