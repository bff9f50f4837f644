import numpy as np
import pytest

from coopdrive.errors import (BatchTooSmall, NonPositiveTemperature,
                              ShapeMismatch, TargetOutOfVocab)
from coopdrive.losses import (DistillConfig, LossWeights, SimilarityMatrix,
                              alignment_backward, alignment_grad,
                              alignment_loss, kd_grad, kd_loss,
                              similarity_matrix, total_loss, traj_grad,
                              traj_loss, verify_gradients)
from coopdrive.numerics import finite_diff_grad, rng_from_seed, softmax_temp

# mpmath-frozen constants (50-digit evaluation of the closed forms)
ALIGN_I2_LOSS = 0.313261687518     # log(1 + e^-1)
ALIGN_I2_DIAG = -0.134470710685    # -(1 - e/(e+1)) / 2
KD_LOSS_05 = 0.105378343908        # student [[.5,-.5]], teacher [[2,0]], T=2
KD_GRAD_05 = 0.217198494856
LN_131 = 4.8751973232
CE_101 = 0.407605964444            # logits [1,0,-1], target 0


def sim_of(S):
    return SimilarityMatrix(S=np.asarray(S, float),
                            sigma=softmax_temp(np.asarray(S, float), 1.0))


# ----------------------------------------------------------------- alignment

def test_alignment_identity_matrix_oracle():
    loss = alignment_loss(sim_of(np.eye(2)))
    assert abs(loss - ALIGN_I2_LOSS) < 1e-10


def test_alignment_grad_identity_matrix_oracle():
    g = alignment_grad(sim_of(np.eye(2)))
    assert np.allclose(np.diag(g), [ALIGN_I2_DIAG, ALIGN_I2_DIAG], atol=1e-10)
    assert np.allclose(g.sum(axis=1), 0.0, atol=1e-12)


def test_alignment_identical_rows_is_log_k():
    for k in (2, 3, 5, 8):
        loss = alignment_loss(sim_of(np.ones((k, k)) * 0.7))
        assert abs(loss - np.log(k)) < 1e-9


def test_alignment_monotone_in_diagonal():
    base = rng_from_seed(7, 1).normal(size=(4, 4))
    losses = []
    for bump in (0.0, 0.5, 1.0, 2.0):
        S = base.copy()
        S[np.diag_indices(4)] += bump
        losses.append(alignment_loss(sim_of(S)))
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_alignment_grad_matches_closed_form():
    S = rng_from_seed(8, 1).normal(size=(5, 5))
    sim = sim_of(S)
    closed = (sim.sigma - np.eye(5)) / 5
    assert np.max(np.abs(alignment_grad(sim) - closed)) < 1e-15


def test_similarity_matrix_normalizes_rows():
    Z = rng_from_seed(9, 1).normal(size=(3, 6)) * 50
    H = rng_from_seed(9, 2).normal(size=(3, 6)) * 0.01
    sim = similarity_matrix(Z, H, 0.5)
    assert np.max(np.abs(sim.S)) <= 1 / 0.5 + 1e-12


def test_similarity_matrix_rejects_small_batch():
    with pytest.raises(BatchTooSmall):
        similarity_matrix(np.ones((1, 4)), np.ones((1, 4)), 1.0)


def test_similarity_matrix_rejects_bad_kappa():
    with pytest.raises(NonPositiveTemperature):
        similarity_matrix(np.ones((2, 4)), np.ones((2, 4)), 0.0)


def test_alignment_backward_matches_finite_differences():
    rng = rng_from_seed(10, 1)
    Z = rng.normal(size=(4, 5))
    H = rng.normal(size=(4, 5))
    loss, dZ, dH = alignment_backward(Z, H, 0.5)
    assert np.isclose(loss, alignment_loss(similarity_matrix(Z, H, 0.5)))

    fdZ = finite_diff_grad(
        lambda z: alignment_loss(similarity_matrix(z, H, 0.5)), Z)
    fdH = finite_diff_grad(
        lambda h: alignment_loss(similarity_matrix(Z, h, 0.5)), H)
    assert np.max(np.abs(dZ - fdZ)) < 1e-7
    assert np.max(np.abs(dH - fdH)) < 1e-7


# --------------------------------------------------------------- distillation

def test_kd_oracle_value_and_grad():
    cfg = DistillConfig(temp=2.0)
    student = np.array([[0.5, -0.5]])
    teacher = np.array([[2.0, 0.0]])
    assert abs(kd_loss(student, teacher, cfg) - KD_LOSS_05) < 1e-10
    g = kd_grad(student, teacher, cfg)
    assert np.allclose(g, [[-KD_GRAD_05, KD_GRAD_05]], atol=1e-10)


def test_kd_self_is_zero():
    cfg = DistillConfig(temp=3.0)
    for _ in range(20):
        x = rng_from_seed(11, 1).normal(size=(4, 7)) * 5
        assert kd_loss(x, x, cfg) <= 1e-9


def test_kd_shift_invariance():
    cfg = DistillConfig(temp=2.0)
    rng = rng_from_seed(12, 1)
    s = rng.normal(size=(3, 6))
    t = rng.normal(size=(3, 6))
    shifted = s + rng.normal(size=(3, 1))  # per-position constant
    assert abs(kd_loss(shifted, t, cfg) - kd_loss(s, t, cfg)) <= 1e-9


def test_kd_grad_rows_sum_to_zero():
    cfg = DistillConfig(temp=4.0)
    rng = rng_from_seed(13, 1)
    g = kd_grad(rng.normal(size=(5, 9)), rng.normal(size=(5, 9)), cfg)
    assert np.max(np.abs(g.sum(axis=1))) <= 1e-9


def test_kd_nonnegative():
    cfg = DistillConfig(temp=1.0)
    rng = rng_from_seed(14, 1)
    for _ in range(10):
        assert kd_loss(rng.normal(size=(2, 5)), rng.normal(size=(2, 5)), cfg) >= 0


def test_kd_squared_convention_differs_by_temp_factor():
    s = np.array([[0.3, -0.7, 1.1]])
    t = np.array([[1.0, 0.0, -1.0]])
    chain = kd_grad(s, t, DistillConfig(temp=2.0))
    squared = kd_grad(s, t, DistillConfig(temp=2.0, gradient_convention="squared"))
    assert np.allclose(squared, 2.0 * chain)


def test_kd_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        kd_loss(np.ones((2, 3)), np.ones((2, 4)), DistillConfig())


# ----------------------------------------------------------------- trajectory

def test_traj_loss_uniform_logits_is_log_vocab():
    logits = np.zeros((6, 131))
    targets = np.arange(6)
    assert abs(traj_loss(logits, targets) - LN_131) < 1e-9


def test_traj_loss_oracle_case():
    assert abs(traj_loss(np.array([[1.0, 0.0, -1.0]]), np.array([0])) - CE_101) < 1e-10
    g = traj_grad(np.array([[1.0, 0.0, -1.0]]), np.array([0]))
    assert np.allclose(g, [[-0.334759044225, 0.244728471055, 0.0900305731704]],
                       atol=1e-10)


def test_traj_grad_matches_finite_differences():
    rng = rng_from_seed(15, 1)
    logits = rng.normal(size=(4, 8))
    targets = rng.integers(0, 8, size=4)
    fd = finite_diff_grad(lambda x: traj_loss(x, targets), logits)
    assert np.max(np.abs(traj_grad(logits, targets) - fd)) < 1e-8


def test_traj_loss_rejects_bad_targets():
    with pytest.raises(TargetOutOfVocab):
        traj_loss(np.zeros((2, 4)), np.array([0, 4]))


# ---------------------------------------------------------------------- total

def test_total_loss_weighting():
    w = LossWeights(lambda1=0.1, lambda2=0.5)
    assert np.isclose(total_loss(1.0, 2.0, 4.0, w), 1.0 + 0.2 + 2.0)


def test_verification_suite_passes():
    report = verify_gradients(trials=25, seed=0)
    assert report["passed"]
    assert report["alignment_max_rel"] < 1e-5
    assert report["kd_max_rel"] < 1e-5
    assert report["closed_form_max_abs"] < 1e-12
