import numpy as np
import pytest

from subsense.activesub import (
    ActivityScores,
    CMatrix,
    SubspaceResult,
    activity_scores,
    eigendecompose,
    eigendecompose_batch,
    estimate_c,
    project,
    reconstruct,
    select_dimension,
    subspace_distance,
    subspace_distance_batch,
)
from subsense.errors import (
    DegenerateSpectrumError,
    DimensionMismatchError,
    EigenSolverError,
    GradientEvaluationError,
    NonOrthonormalError,
)
from subsense.gradients import GradientSample


def _random_spd(m, seed, scale=None):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, m))
    C = A @ A.T
    if scale is not None:
        C = C * scale
    return C


def test_estimate_c_matches_definition():
    rng = np.random.default_rng(0)
    G = rng.standard_normal((100, 4))
    c = estimate_c(G)
    assert isinstance(c, CMatrix) and c.M == 100 and c.dim == 4
    assert np.allclose(c.entries, G.T @ G / 100)
    assert np.array_equal(c.entries, c.entries.T)  # exactly symmetric
    # eigenvalues of an outer-product average are non-negative
    assert np.linalg.eigvalsh(c.entries).min() > -1e-12


def test_estimate_c_accepts_sample_objects():
    rng = np.random.default_rng(1)
    G = rng.standard_normal((10, 3))
    samples = [GradientSample(x=np.zeros(3), g=g) for g in G]
    assert np.allclose(estimate_c(samples).entries, estimate_c(G).entries)


def test_estimate_c_rejects_bad_input():
    with pytest.raises(GradientEvaluationError):
        estimate_c(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        estimate_c([])
    with pytest.raises(DimensionMismatchError):
        estimate_c(
            [GradientSample(x=np.zeros(2), g=np.zeros(2)),
             GradientSample(x=np.zeros(3), g=np.zeros(3))]
        )


@pytest.mark.parametrize("m", [2, 3, 6, 9])
def test_eigendecompose_against_lapack_oracle(m):
    C = _random_spd(m, seed=m)
    sub = eigendecompose(C)
    lam_ref = np.sort(np.linalg.eigvalsh(C))[::-1]
    assert np.abs(sub.eigenvalues - lam_ref).max() < 1e-10 * max(1.0, lam_ref[0])
    # Reconstruction: W diag(lam) W^T == C
    W = sub.eigenvectors
    recon = W @ np.diag(sub.eigenvalues) @ W.T
    assert np.abs(recon - C).max() < 1e-10 * max(1.0, np.abs(C).max())
    assert np.abs(W.T @ W - np.eye(m)).max() < 1e-12
    # Sign convention: each column's largest-magnitude entry is positive.
    for j in range(m):
        col = W[:, j]
        assert col[np.argmax(np.abs(col))] > 0
    # Descending order
    assert np.all(np.diff(sub.eigenvalues) <= 1e-12)


def test_eigendecompose_batch_matches_single():
    Cs = np.stack([_random_spd(5, seed=s) for s in range(8)])
    vals, vecs, ok = eigendecompose_batch(Cs)
    assert ok.all()
    for b in range(8):
        single = eigendecompose(Cs[b])
        assert np.allclose(vals[b], single.eigenvalues, atol=1e-12)
        assert np.allclose(vecs[b], single.eigenvectors, atol=1e-12)


def test_eigendecompose_rejects_asymmetric():
    with pytest.raises(EigenSolverError):
        eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_psd_clamp_of_tiny_negative_tail():
    # A rank-1 PSD matrix: rounding can push trailing eigenvalues slightly
    # negative; they must come back exactly zero.
    v = np.array([1.0, 2.0, 3.0])
    sub = eigendecompose(np.outer(v, v))
    assert sub.eigenvalues[0] == pytest.approx(14.0, rel=1e-12)
    assert np.all(sub.eigenvalues[1:] >= 0.0)


def test_select_dimension_picks_largest_gap():
    assert select_dimension(np.array([100.0, 90.0, 1.0, 0.5])) == 2
    assert select_dimension(np.array([100.0, 1.0, 0.9, 0.5])) == 1
    assert select_dimension(np.array([5.0])) == 1
    # Zero tail cannot create an infinite gap past the first crossing.
    assert select_dimension(np.array([10.0, 1.0, 0.0, 0.0])) == 2
    with pytest.raises(ValueError):
        select_dimension(np.array([1.0, 2.0]))
    with pytest.raises(DegenerateSpectrumError):
        select_dimension(np.array([0.0, 0.0]))


def test_activity_scores_trace_identity_and_ranking():
    C = _random_spd(6, seed=3)
    sub = eigendecompose(C)
    scores = activity_scores(sub)
    assert isinstance(scores, ActivityScores)
    # sum_i alpha_i = sum_j lambda_j sum_i w_ij^2 = trace(C)
    assert scores.raw.sum() == pytest.approx(np.trace(C), rel=1e-10)
    assert scores.normalized.max() == pytest.approx(1.0)
    assert np.array_equal(scores.ranking, np.argsort(-scores.raw, kind="stable"))


def test_subspace_distance_bounds_and_identity():
    m = 5
    C = _random_spd(m, seed=4)
    W = eigendecompose(C).eigenvectors
    A = W[:, :2]
    assert subspace_distance(A, A) == pytest.approx(0.0, abs=1e-12)
    B = W[:, 2:4]  # orthogonal complement directions
    assert subspace_distance(A, B) == pytest.approx(1.0)
    rng = np.random.default_rng(5)
    for _ in range(10):
        Q1 = np.linalg.qr(rng.standard_normal((m, 2)))[0]
        Q2 = np.linalg.qr(rng.standard_normal((m, 2)))[0]
        d = subspace_distance(Q1, Q2)
        assert 0.0 <= d <= 1.0


def test_subspace_distance_basis_invariance():
    rng = np.random.default_rng(6)
    A = np.linalg.qr(rng.standard_normal((6, 3)))[0]
    B = np.linalg.qr(rng.standard_normal((6, 3)))[0]
    # Rotate each basis within its own span: distance must not move.
    RA = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    RB = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    assert subspace_distance(A @ RA, B @ RB) == pytest.approx(subspace_distance(A, B), abs=1e-12)


def test_subspace_distance_matches_principal_angle_oracle():
    from scipy.linalg import subspace_angles

    rng = np.random.default_rng(7)
    for k in (1, 2, 3):
        A = np.linalg.qr(rng.standard_normal((7, k)))[0]
        B = np.linalg.qr(rng.standard_normal((7, k)))[0]
        oracle = np.sin(np.max(subspace_angles(A, B)))
        assert subspace_distance(A, B) == pytest.approx(oracle, abs=1e-10)


def test_subspace_distance_frobenius_norm():
    rng = np.random.default_rng(8)
    A = np.linalg.qr(rng.standard_normal((5, 2)))[0]
    B = np.linalg.qr(rng.standard_normal((5, 2)))[0]
    PA, PB = A @ A.T, B @ B.T
    assert subspace_distance(A, B, norm="frobenius") == pytest.approx(
        np.linalg.norm(PA - PB, "fro"), abs=1e-10
    )
    with pytest.raises(ValueError):
        subspace_distance(A, B, norm="nuclear")


def test_subspace_distance_input_validation():
    rng = np.random.default_rng(9)
    A = np.linalg.qr(rng.standard_normal((5, 2)))[0]
    with pytest.raises(NonOrthonormalError):
        subspace_distance(A, rng.standard_normal((5, 2)))
    with pytest.raises(DimensionMismatchError):
        subspace_distance(A, np.linalg.qr(rng.standard_normal((6, 2)))[0])
    with pytest.raises(DimensionMismatchError):
        subspace_distance(A.T, A.T)  # wide matrices rejected


def test_subspace_distance_batch_matches_scalar():
    rng = np.random.default_rng(10)
    ref = np.linalg.qr(rng.standard_normal((6, 2)))[0]
    stack = np.stack([np.linalg.qr(rng.standard_normal((6, 2)))[0] for _ in range(5)])
    batch = subspace_distance_batch(stack, ref)
    for b in range(5):
        assert batch[b] == pytest.approx(subspace_distance(stack[b], ref), abs=1e-12)


def test_project_reconstruct_round_trip():
    C = _random_spd(6, seed=11)
    sub = eigendecompose(C).with_n(2)
    rng = np.random.default_rng(12)
    for _ in range(5):
        x = rng.standard_normal(6)
        av = project(x, sub)
        assert av.y.shape == (2,) and av.z.shape == (4,)
        assert np.abs(reconstruct(av, sub) - x).max() < 1e-10


def test_subspace_result_api():
    C = _random_spd(4, seed=13)
    sub = eigendecompose(C)
    with pytest.raises(ValueError):
        _ = sub.W1  # n not chosen yet
    sub2 = sub.with_n(3)
    assert sub2.W1.shape == (4, 3) and sub2.W2.shape == (4, 1)
    with pytest.raises(ValueError):
        sub.with_n(5)
    rt = SubspaceResult.from_dict(sub2.to_dict())
    assert rt.n == 3
    assert np.allclose(rt.eigenvalues, sub2.eigenvalues)
    with pytest.raises(DimensionMismatchError):
        project(np.zeros(5), sub2)
