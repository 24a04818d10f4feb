import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctpe.basis import build_basis
from ctpe.diffusion import torus_brownian
from ctpe.metrics import (
    coeff_difference,
    error_report,
    feature_bound_estimate,
    fit_rate,
    mode_weights,
    sobolev_norm,
    trace_ratio,
    trace_ratio_from_grams,
)

coeff_maps = st.dictionaries(
    st.tuples(st.integers(-4, 4), st.integers(-4, 4)),
    st.floats(-10, 10, allow_nan=False),
    max_size=12,
)


@pytest.mark.parametrize("order", [0, 1, 2])
def test_constant_mode_all_orders(order):
    assert sobolev_norm({(0, 0): 3.0}, order) == pytest.approx(3.0)


def test_single_cosine_h1():
    assert sobolev_norm({(1,): 1.0}, 1) == pytest.approx(math.sqrt(1 + 4 * np.pi**2))


def test_hessian_weight_is_frobenius():
    a = np.array([1, 2, -1])
    H = (2 * np.pi) ** 2 * np.outer(a, a)
    expected = 1 + (2 * np.pi) ** 2 * (a @ a) + np.sum(H**2)
    assert mode_weights(a[None, :], 2)[0] == pytest.approx(expected)
    with pytest.raises(ValueError):
        mode_weights(a[None, :], 3)


def test_norms_against_monte_carlo():
    basis = build_basis(2, 2)
    theta = np.random.default_rng(0).normal(size=basis.m)
    x = np.random.default_rng(1).random((1_000_000, 2))
    f = basis.features(x) @ theta
    g = np.einsum("nmd,m->nd", basis.gradients(x), theta)
    # Hessian of each feature is -(2 pi)^2 a a^T psi_a
    freq = basis.freq.astype(float)
    hess = -(2 * np.pi) ** 2 * np.einsum("nm,m,mi,mj->nij", basis.features(x), theta, freq, freq)
    for order, samples in [
        (0, f**2),
        (1, f**2 + np.sum(g**2, axis=1)),
        (2, f**2 + np.sum(g**2, axis=1) + np.sum(hess**2, axis=(1, 2))),
    ]:
        se = samples.std() / math.sqrt(samples.size)
        assert abs(samples.mean() - sobolev_norm(basis.coeff_map(theta), order) ** 2) <= 5 * se


@settings(max_examples=100, deadline=None)
@given(coeff_maps)
def test_norm_ordering(coeffs):
    l2, h1, h2 = (sobolev_norm(coeffs, k) for k in (0, 1, 2))
    assert l2 <= h1 * (1 + 1e-12) and h1 <= h2 * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(coeff_maps, coeff_maps)
def test_difference_is_antisymmetric(a, b):
    assert sobolev_norm(coeff_difference(a, b), 1) == pytest.approx(sobolev_norm(coeff_difference(b, a), 1))
    assert sobolev_norm(coeff_difference(a, a), 1) == 0.0


def test_trace_ratio_degree_one():
    value = trace_ratio(build_basis(1, 1))
    assert value == pytest.approx(1 + 2 / (1 + 4 * np.pi**2), rel=1e-14)
    assert value == pytest.approx(1.0497, abs=5e-4)  # three-term sum is 1.04941


def test_trace_ratio_from_grams_agrees():
    basis = build_basis(2, 3)
    assert trace_ratio_from_grams(basis.gram_H0, basis.gram_H1) == pytest.approx(trace_ratio(basis))


def test_trace_bounded_in_one_dimension():
    assert trace_ratio(build_basis(1, 64)) - trace_ratio(build_basis(1, 16)) < 0.05


def test_trace_logarithmic_in_two_dimensions():
    ns = [8, 16, 32, 64]
    bases = [build_basis(2, n) for n in ns]
    ms = np.array([b.m for b in bases], dtype=float)
    tr = np.array([trace_ratio(b) for b in bases])
    slope, intercept = np.polyfit(np.log(ms), tr, 1)
    resid = tr - (slope * np.log(ms) + intercept)
    r2 = 1 - resid @ resid / np.sum((tr - tr.mean()) ** 2)
    assert r2 >= 0.95
    # with the exact (2 pi)^2 weight the lattice sum gives
    # sum 1/(1 + 4 pi^2 |a|^2) ~ (2 pi / (4 pi^2)) ln n = ln(m) / (4 pi)
    assert slope == pytest.approx(1 / (4 * np.pi), rel=0.1)


def test_trace_log_slope_band_in_two_dimensions():
    # stated band for the ln m coefficient; the exact weights give 1/(4 pi)
    # and the unscaled weights 1 + |a|^2 give about pi, so this band is not met
    ns = [8, 16, 32, 64]
    bases = [build_basis(2, n) for n in ns]
    slope = np.polyfit(np.log([b.m for b in bases]), [trace_ratio(b) for b in bases], 1)[0]
    assert 0.5 <= slope <= 1.5


def test_trace_power_law_in_three_dimensions():
    ns = [4, 8, 16]
    bases = [build_basis(3, n) for n in ns]
    slope = fit_rate([b.m for b in bases], [trace_ratio(b) for b in bases]).slope
    assert 1 - 2 / 3 - 0.15 <= slope <= 1 - 2 / 3 + 0.15


def test_fit_rate_exact_power():
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    fit = fit_rate(xs, xs**-0.5)
    assert fit.slope == pytest.approx(-0.5) and fit.r2 == pytest.approx(1.0)
    fit = fit_rate(xs, 3 * xs**2)
    assert fit.slope == pytest.approx(2.0) and fit.intercept == pytest.approx(math.log(3))


def test_fit_rate_noisy():
    rng = np.random.default_rng(3)
    xs = np.geomspace(1, 1000, 12)
    ys = xs**-0.5 * (1 + 0.01 * rng.standard_normal(xs.size))
    assert abs(fit_rate(xs, ys).slope + 0.5) <= 0.05


@pytest.mark.parametrize("xs,ys", [([1, 2], [1, 2]), ([1, 2, 0], [1, 1, 1]), ([1, 2, 3], [1, -1, 1])])
def test_fit_rate_rejects(xs, ys):
    with pytest.raises(ValueError):
        fit_rate(xs, ys)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_error_report_triangle(seed):
    rng = np.random.default_rng(seed)
    basis = build_basis(1, 3)
    truth = {(k,): float(v) for k, v in zip(range(-6, 7), rng.normal(size=13))}
    rep = error_report(rng.normal(size=basis.m), rng.normal(size=basis.m), basis, truth, T=1.0, eta=0.1, nu=2, seed=seed)
    assert rep.total_h1 <= rep.approx_h1 + rep.stat_h1 + 1e-10
    assert rep.l2_error <= rep.h1_error <= rep.h2_error
    assert rep.as_dict()["m"] == basis.m


def test_feature_bound_estimate_positive():
    basis = build_basis(1, 4)
    grid = np.linspace(0, 1, 257)[:-1, None]
    D = feature_bound_estimate(basis, torus_brownian(1), grid)
    # sup |H1^{-1/2} psi|^2 over the grid is at least the trace ratio at x = 0
    assert D**2 >= trace_ratio(basis)
