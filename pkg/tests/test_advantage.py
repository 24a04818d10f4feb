import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctpe.advantage import (
    AdvantageEstimate,
    ControlAffinePolicy,
    advantage,
    advantage_error_bound_check,
    advantage_grid,
)
from ctpe.basis import FunctionInSpan, build_basis


def box_policy(d=1, half=1.0):
    low, high = -half * np.ones(d), half * np.ones(d)
    return ControlAffinePolicy(low, high, lambda x: 0.3 * np.sin(2 * np.pi * np.atleast_2d(x)))


def random_function(basis, seed):
    return FunctionInSpan(np.random.default_rng(seed).normal(size=basis.m), basis)


def test_zero_at_mean_action():
    basis = build_basis(2, 2)
    pol = box_policy(2)
    est = AdvantageEstimate(random_function(basis, 0), pol)
    x = np.random.default_rng(1).random((20, 2))
    np.testing.assert_allclose(advantage(est, x, pol.mean_action(x)), 0.0, atol=1e-14)


def test_single_cosine_value():
    basis = build_basis(1, 1)
    c1 = 0.7
    pol = ControlAffinePolicy(np.array([-2.0]), np.array([2.0]), lambda x: np.zeros_like(np.atleast_2d(x)))
    est = AdvantageEstimate(FunctionInSpan(basis.coeff_vector({(1,): c1}), basis), pol)
    q = advantage(est, np.array([0.25]), np.array([1.0]))
    assert isinstance(q, float)
    assert q == pytest.approx(-2 * np.pi * math.sqrt(2) * c1 * math.sin(math.pi / 2))


def test_linearity_in_displacement():
    basis = build_basis(1, 3)
    pol = ControlAffinePolicy(np.array([-3.0]), np.array([3.0]), lambda x: np.full_like(np.atleast_2d(x), 0.2))
    est = AdvantageEstimate(random_function(basis, 2), pol)
    x = np.random.default_rng(3).random((15, 1))
    a1 = np.random.default_rng(4).uniform(-1, 1, (15, 1))
    a2 = np.random.default_rng(5).uniform(-1, 1, (15, 1))
    lhs = advantage(est, x, a1 + a2 - 0.2)
    np.testing.assert_allclose(lhs, advantage(est, x, a1) + advantage(est, x, a2), atol=1e-12)


def test_action_outside_box_rejected():
    basis = build_basis(1, 1)
    est = AdvantageEstimate(random_function(basis, 0), box_policy())
    with pytest.raises(ValueError):
        advantage(est, np.array([0.1]), np.array([1.5]))


def test_invalid_box_rejected():
    with pytest.raises(ValueError):
        ControlAffinePolicy(np.array([1.0]), np.array([0.0]), lambda x: x)


def test_cauchy_schwarz_bound():
    basis = build_basis(2, 3)
    pol = box_policy(2, 0.5)
    f = random_function(basis, 6)
    est = AdvantageEstimate(f, pol)
    rng = np.random.default_rng(7)
    x = rng.random((500, 2))
    a = rng.uniform(-0.5, 0.5, (500, 2))
    q = advantage(est, x, a)
    assert np.all(np.abs(q) <= np.linalg.norm(f.gradient(x), axis=1) * pol.diameter + 1e-12)


def test_callback_drift_gap():
    basis = build_basis(1, 1)
    f = FunctionInSpan(basis.coeff_vector({(1,): 1.0}), basis)
    pol = ControlAffinePolicy(np.array([-1.0]), np.array([1.0]), lambda x: np.zeros_like(np.atleast_2d(x)),
                              drift_gap=lambda x, a: np.atleast_2d(a) ** 3)
    x = np.array([[0.1], [0.4]])
    a = np.array([[0.5], [-0.2]])
    np.testing.assert_allclose(AdvantageEstimate(f, pol)(x, a), f.gradient(x)[:, 0] * a[:, 0] ** 3)


def test_bound_check_identical_functions():
    basis = build_basis(1, 2)
    f = random_function(basis, 0)
    rng = np.random.default_rng(1)
    rep = advantage_error_bound_check(f, f, box_policy(), rng.random((100, 1)), rng.uniform(-1, 1, (100, 1)))
    assert rep.max_sq_error == 0.0 and rep.rhs == 0.0 and rep.holds_pointwise


@pytest.mark.parametrize("alpha", [(1,), (-2,), (3,)])
def test_bound_holds_for_single_mode_perturbation(alpha):
    basis = build_basis(1, 3)
    f = random_function(basis, 8)
    delta = 0.05
    f_hat = FunctionInSpan(f.coeffs + delta * basis.coeff_vector({alpha: 1.0}), basis)
    rng = np.random.default_rng(9)
    rep = advantage_error_bound_check(f_hat, f, box_policy(), rng.random((10_000, 1)), rng.uniform(-1, 1, (10_000, 1)))
    assert rep.n_samples == 10_000
    assert rep.holds_pointwise and rep.holds_in_mean
    assert rep.max_sq_error <= rep.rhs


def test_bound_quadratic_homogeneity():
    basis = build_basis(1, 2)
    f = random_function(basis, 10)
    rng = np.random.default_rng(11)
    xs, acts = rng.random((1000, 1)), rng.uniform(-1, 1, (1000, 1))
    reps = []
    for delta in (0.01, 0.02):
        f_hat = FunctionInSpan(f.coeffs + delta * basis.coeff_vector({(2,): 1.0}), basis)
        reps.append(advantage_error_bound_check(f_hat, f, box_policy(), xs, acts))
    assert reps[1].rhs == pytest.approx(4 * reps[0].rhs, rel=1e-9)
    assert reps[1].max_sq_error == pytest.approx(4 * reps[0].max_sq_error, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 2))
def test_bound_conformance_random(seed, d):
    basis = build_basis(d, 2)
    rng = np.random.default_rng(seed)
    f = FunctionInSpan(rng.normal(size=basis.m), basis)
    f_hat = FunctionInSpan(f.coeffs + 0.1 * rng.normal(size=basis.m), basis)
    pol = box_policy(d, 0.7)
    rep = advantage_error_bound_check(f_hat, f, pol, rng.random((200, d)), rng.uniform(-0.7, 0.7, (200, d)))
    assert rep.holds_in_mean


def test_mismatched_spaces_rejected():
    with pytest.raises(ValueError):
        advantage_error_bound_check(random_function(build_basis(1, 1), 0), random_function(build_basis(1, 2), 0),
                                    box_policy(), np.zeros((1, 1)), np.zeros((1, 1)))


def test_grid_rows():
    basis = build_basis(1, 1)
    est = AdvantageEstimate(random_function(basis, 0), box_policy())
    grid = advantage_grid(est, np.linspace(0, 0.9, 10), np.linspace(-1, 1, 5))
    assert grid.shape == (50, 3)
    assert grid[7, 2] == pytest.approx(advantage(est, grid[7, :1], grid[7, 1:2]))
