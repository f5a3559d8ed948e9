import numpy as np
import pytest

from evaluation.solver import gauss_newton_solve
from models.errors import SingularSystemError


def linear(a, b):
    return lambda x: (a @ x - b, a)


@pytest.fixture
def system(rng):
    a = rng.normal(size=(10, 3))
    b = rng.normal(size=10)
    return a, b


def test_linear_problem_takes_one_step(system):
    a, b = system
    expected, *_ = np.linalg.lstsq(a, b, rcond=None)
    result = gauss_newton_solve(linear(a, b), np.zeros(3))
    assert result.iterations == 1
    assert result.converged
    np.testing.assert_allclose(result.state, expected, atol=1e-10)
    assert result.history[-1] <= result.history[0]


def test_start_at_the_minimum(system):
    a, _ = system
    truth = np.array([0.5, -1.0, 2.0])
    result = gauss_newton_solve(linear(a, a @ truth), truth)
    assert result.iterations == 0
    assert result.converged
    assert result.cost == pytest.approx(0.0, abs=1e-20)


def test_nonlinear_scalar():
    def residual(x):
        return np.array([x[0] ** 2 - 4.0, x[1] - 1.0]), np.array([[2.0 * x[0], 0.0], [0.0, 1.0]])

    result = gauss_newton_solve(residual, np.array([3.0, 0.0]))
    assert result.converged
    np.testing.assert_allclose(result.state, [2.0, 1.0], atol=1e-9)
    assert result.iterations < 10


def test_iteration_cap():
    def residual(x):
        return np.array([x[0] ** 2 - 4.0]), np.array([[2.0 * x[0]]])

    result = gauss_newton_solve(residual, np.array([30.0]), max_iters=2)
    assert result.iterations == 2
    assert not result.converged


def test_rank_deficient_system(system):
    a, b = system
    a = np.column_stack([a[:, 0], a[:, 0], a[:, 1]])
    with pytest.raises(SingularSystemError, match="condition"):
        gauss_newton_solve(linear(a, b), np.zeros(3))


def test_damping_handles_rank_deficiency(system):
    a, b = system
    a = np.column_stack([a[:, 0], a[:, 0], a[:, 1]])
    expected, *_ = np.linalg.lstsq(a, b, rcond=None)
    best = 0.5 * float(np.sum((a @ expected - b) ** 2))
    result = gauss_newton_solve(linear(a, b), np.zeros(3), max_iters=20, levenberg=True)
    assert np.all(np.isfinite(result.state))
    assert result.cost == pytest.approx(best, rel=1e-6)


def test_projection_is_applied(system):
    a, b = system
    result = gauss_newton_solve(linear(a, b), np.zeros(3), project=lambda x: np.clip(x, -0.01, 0.01))
    assert np.all(np.abs(result.state) <= 0.01)
