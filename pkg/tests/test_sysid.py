import numpy as np
import pytest

from quantid.errors import InvalidInputError, PersistentExcitationError, ShapeError
from quantid.quantizer import scale_dataset
from quantid.simulation import DC_MOTOR, generate_training, rep_rng
from quantid.sysid import (
    DataMatrices,
    build_data_matrices,
    identification_report,
    identify,
    relative_error,
    relative_error_2,
)

WORKED = (np.array([[1.0, 1.5, -0.25]]), np.array([[1.0, -1.0]]))


def test_worked_snapshots():
    d = build_data_matrices([WORKED])
    np.testing.assert_array_equal(d.X, [[1.0, 1.5]])
    np.testing.assert_array_equal(d.Xplus, [[1.5, -0.25]])
    np.testing.assert_array_equal(d.U, [[1.0, -1.0]])
    np.testing.assert_array_equal(d.Psi, [[1.0, 1.5], [1.0, -1.0]])
    assert (d.n, d.m, d.T) == (1, 1, 2)


def test_duplicated_trajectory_keeps_gram():
    once, twice = build_data_matrices([WORKED]), build_data_matrices([WORKED, WORKED])
    assert twice.T == 2 * once.T
    np.testing.assert_allclose(twice.gram(), once.gram())


def test_empty_list():
    with pytest.raises(InvalidInputError):
        build_data_matrices([])


def test_bad_trajectory_is_named():
    bad = (np.zeros((1, 3)), np.zeros((1, 3)))
    with pytest.raises(ShapeError, match="1"):
        build_data_matrices([WORKED, bad])


def test_data_matrix_validation():
    with pytest.raises(ShapeError):
        DataMatrices(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((1, 3)))


def test_worked_identification_is_exact():
    model = identify(build_data_matrices([WORKED]))
    # Psi is invertible, so G_hat = X+ Psi^{-1} = [0.5, 1]
    np.testing.assert_allclose(model.A_hat, [[0.5]], atol=1e-15)
    np.testing.assert_allclose(model.B_hat, [[1.0]], atol=1e-15)


def test_autonomous_recovery():
    A = np.array([[0.9, 0.2], [-0.1, 0.7]])
    x = np.empty((2, 6))
    x[:, 0] = [1.0, 0.0]
    for t in range(5):
        x[:, t + 1] = A @ x[:, t]
    d = DataMatrices(x[:, :-1], x[:, 1:], np.zeros((0, 5)))
    np.testing.assert_allclose(identify(d).A_hat, A, atol=1e-12)


def test_unexcited_input_is_rejected():
    x = np.array([[1.0, 0.5, 0.25, 0.125]])
    with pytest.raises(PersistentExcitationError) as info:
        identify(build_data_matrices([(x, np.zeros((1, 3)))]))
    assert info.value.sigma_min == pytest.approx(0.0, abs=1e-12)


def test_dc_motor_exact_recovery():
    trajs = generate_training(DC_MOTOR, 150, 100, rep_rng(0, 0))
    d = build_data_matrices(trajs)
    model = identify(d)
    assert relative_error(DC_MOTOR.model.A, model.A_hat) <= 1e-8
    assert relative_error(DC_MOTOR.model.B, model.B_hat) <= 1e-8
    rep = identification_report(model, d)
    assert rep["T"] == 15000
    assert rep["residual_norm"] <= 1e-10


def test_scaling_invariance():
    d = build_data_matrices(generate_training(DC_MOTOR, 5, 20, rep_rng(0, 1)))
    np.testing.assert_allclose(identify(scale_dataset(d, 0.37)).G_hat, identify(d).G_hat, atol=1e-10)


def test_consistent_columns_leave_minimizer_unchanged():
    rng = np.random.default_rng(5)
    X, U = rng.standard_normal((2, 8)), rng.standard_normal((1, 8))
    Xp = rng.standard_normal((2, 8))
    d = DataMatrices(X, Xp, U)
    G = identify(d).G_hat
    Xn, Un = rng.standard_normal((2, 4)), rng.standard_normal((1, 4))
    extra = DataMatrices(np.hstack([X, Xn]), np.hstack([Xp, G @ np.vstack([Xn, Un])]), np.hstack([U, Un]))
    np.testing.assert_allclose(identify(extra).G_hat, G, atol=1e-12)


class TestRelativeError:
    def test_zero(self):
        assert relative_error(np.eye(2), np.eye(2)) == 0.0

    def test_doubled(self):
        assert relative_error(np.eye(2), 2 * np.eye(2)) == pytest.approx(1.0)

    def test_single_entry(self):
        E = np.zeros((2, 2))
        E[0, 0] = 0.01
        assert relative_error(np.eye(2), np.eye(2) + E) == pytest.approx(0.01 / np.sqrt(2), rel=1e-14)
        assert relative_error_2(np.eye(2), np.eye(2) + E) == pytest.approx(0.01, rel=1e-14)

    def test_zero_truth(self):
        with pytest.raises(InvalidInputError):
            relative_error(np.zeros((2, 2)), np.eye(2))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            relative_error(np.eye(2), np.eye(3))
