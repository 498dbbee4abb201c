import numpy as np
import pytest

from risac.optim import (
    SolverConfig,
    alternating_minimize,
    finite_difference_gradient,
    projected_gradient,
)


def identity(x):
    return x


def test_quadratic_bowl():
    target = np.array([1.0, -2.0, 3.0])
    res = projected_gradient(
        objective=lambda x: float(np.sum((x - target) ** 2)),
        gradient=lambda x: 2.0 * (x - target),
        projection=identity,
        init=np.zeros(3),
        cfg=SolverConfig(tol_rel=1e-14, max_iter=5000),
    )
    assert np.linalg.norm(res.x - target) < 1e-6
    assert np.all(np.diff(res.trace) <= 0.0)


def test_circle_projection_moves_to_nearest_point():
    # minimize |x - 2|^2 over the unit circle -> x = 1
    res = projected_gradient(
        objective=lambda x: float(np.abs(x[0] - 2.0) ** 2),
        gradient=lambda x: x - 2.0,
        projection=lambda x: x / np.abs(x),
        init=np.array([np.exp(1j * 2.0)]),
        cfg=SolverConfig(tol_rel=1e-14, max_iter=5000),
    )
    assert abs(res.x[0] - 1.0) < 1e-6


def test_constant_objective_returns_init():
    res = projected_gradient(
        objective=lambda x: 1.0,
        gradient=lambda x: np.zeros_like(x),
        projection=identity,
        init=np.array([4.0, 5.0]),
    )
    assert res.iterations == 1
    assert np.allclose(res.x, [4.0, 5.0])
    assert res.converged


def test_alternating_bilinear_toy():
    state = {"x": 2.0, "y": 2.0}

    def objective():
        return abs(1.0 - state["x"] * state["y"]) ** 2

    def update_x():
        # exact minimizer of |1 - x y|^2 in x
        state["x"] = 1.0 / state["y"]
        return objective()

    def update_y():
        state["y"] = 1.0 / state["x"]
        return objective()

    res = alternating_minimize([update_x, update_y], SolverConfig(tol_rel=1e-12))
    assert res.objective < 1e-10
    assert np.all(np.diff(res.trace) <= 1e-12)


def test_alternating_single_block():
    state = {"x": 4.0}

    def update():
        # exact block minimizer of (x - 2)^2
        state["x"] = 2.0
        return (state["x"] - 2.0) ** 2

    res = alternating_minimize([update], SolverConfig(tol_rel=1e-6, max_iter=100))
    assert res.converged
    assert res.objective == 0.0
    assert state["x"] == 2.0


def test_alternating_zero_budget_returns_empty_trace():
    res = alternating_minimize([lambda: 1.0], SolverConfig(max_iter=0))
    assert res.trace.size == 0
    assert not res.converged


def test_alternating_rejects_increase():
    calls = {"n": 0}

    def bad_block():
        calls["n"] += 1
        return float(calls["n"])  # strictly increasing objective

    with pytest.raises(RuntimeError):
        alternating_minimize([bad_block], SolverConfig(max_iter=10))


def test_fd_gradient_linear_exact():
    c = np.array([2.0, -3.0])
    grad = finite_difference_gradient(lambda x: float(c @ x), np.array([1.0, 1.0]))
    assert np.allclose(grad, c, atol=1e-8)


def test_fd_gradient_quadratic():
    grad = finite_difference_gradient(
        lambda x: float(np.sum(x**2)), np.array([1.0, -2.0]), step=1e-5
    )
    assert np.allclose(grad, [2.0, -4.0], atol=1e-8)


def test_fd_gradient_complex_convention():
    # f = |z|^2 has Wirtinger gradient d f / d conj(z) = z.
    z = np.array([1.0 + 2.0j, -0.5 + 0.25j])
    grad = finite_difference_gradient(lambda x: float(np.sum(np.abs(x) ** 2)), z)
    assert np.allclose(grad, z, atol=1e-7)


def test_projected_gradient_deterministic():
    def run():
        return projected_gradient(
            objective=lambda x: float(np.sum((x - 1.5) ** 2)),
            gradient=lambda x: 2.0 * (x - 1.5),
            projection=identity,
            init=np.zeros(4),
            cfg=SolverConfig(seed=123),
        )

    r1, r2 = run(), run()
    assert np.array_equal(r1.trace, r2.trace)
    assert np.array_equal(r1.x, r2.x)
