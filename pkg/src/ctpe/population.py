"""Closed-form population oracles for models with a diagonal semigroup.

On the torus with Brownian noise every Fourier mode is an eigenfunction of
the generator, ``A psi_alpha = -lambda_alpha psi_alpha``, and of the semigroup,
``P_t psi_alpha = exp(-lambda_alpha t) psi_alpha``.  The value function, the
discretized Bellman fixed point and the projected LSTD target therefore all
decouple mode by mode.  Reward and value functions are passed around as
coefficient maps ``alpha -> c_alpha`` in the real Fourier encoding of
:mod:`ctpe.basis`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .basis import FourierBasis
from .discretization import DiscretizationScheme

Coeffs = Mapping[tuple[int, ...], float]


def _spectrum_fn(spectrum) -> Callable[[np.ndarray], np.ndarray]:
    fn = getattr(spectrum, "spectrum", spectrum)
    if fn is None:
        raise ValueError("model has no closed-form spectrum; use monte_carlo_theta_bar")
    return fn


def _eigenvalues(spectrum, alphas) -> np.ndarray:
    return np.asarray(_spectrum_fn(spectrum)(np.atleast_2d(np.asarray(alphas, dtype=int))), dtype=float)


def true_value_coeffs(spectrum, r_hat: Coeffs, beta: float) -> dict[tuple[int, ...], float]:
    """Mode-wise solution of ``(beta - A) f* = r``: ``c*_alpha = r_alpha / (beta + lambda_alpha)``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    keys = list(r_hat)
    if not keys:
        return {}
    lam = _eigenvalues(spectrum, keys)
    return {k: float(r_hat[k]) / (beta + l) for k, l in zip(keys, lam)}


def _node_sums(scheme: DiscretizationScheme, lam: np.ndarray) -> np.ndarray:
    """``sum_i kappa_i exp(-lambda i eta)`` per eigenvalue."""
    i = np.arange(scheme.order)
    return np.exp(-np.outer(lam, i * scheme.eta)) @ scheme.kappas


def _check_beta(scheme: DiscretizationScheme, beta: float | None) -> float:
    if beta is not None and not math.isclose(beta, scheme.beta, rel_tol=0, abs_tol=1e-15):
        raise ValueError("beta disagrees with the scheme's discount rate")
    if not scheme.gamma < 1:
        raise ValueError("block discount exp(-beta (nu-1) eta) must be < 1")
    return scheme.beta


def discretized_fixed_point_coeffs(
    scheme: DiscretizationScheme, spectrum, r_hat: Coeffs, beta: float | None = None
) -> dict[tuple[int, ...], float]:
    """Fixed point of the order-``nu`` Bellman operator, mode by mode.

    ``c_alpha = eta * sum_i kappa_i exp(-lambda i eta) r_alpha
    / (1 - exp(-(beta + lambda)(nu - 1) eta))``.
    """
    beta = _check_beta(scheme, beta)
    keys = list(r_hat)
    if not keys:
        return {}
    lam = _eigenvalues(spectrum, keys)
    num = scheme.eta * _node_sums(scheme, lam)
    den = -np.expm1(-(beta + lam) * scheme.horizon)
    return {k: float(r_hat[k]) * nm / dn for k, nm, dn in zip(keys, num, den)}


def population_matrices(
    basis: FourierBasis, scheme: DiscretizationScheme, spectrum, r_hat: Coeffs
) -> tuple[np.ndarray, np.ndarray]:
    """Population counterparts of the LSTD normal equations, at the same scale:

    ``A = (1/eta) E[psi(X_0) (psi(X_0) - gamma psi(X_{(nu-1) eta}))^T]`` and
    ``b = sum_i kappa_i E[r(X_{i eta}) psi(X_0)]`` under the uniform law.
    """
    lam = _eigenvalues(spectrum, basis.freq)
    A = np.diag(-np.expm1(-(scheme.beta + lam) * scheme.horizon) / scheme.eta)
    b = _node_sums(scheme, lam) * basis.coeff_vector(r_hat)
    return A, b


def population_theta_bar(
    basis: FourierBasis, scheme: DiscretizationScheme, spectrum, r_hat: Coeffs, beta: float | None = None
) -> np.ndarray:
    """Solve the projected fixed-point equation for ``theta_bar``."""
    _check_beta(scheme, beta)
    A, b = population_matrices(basis, scheme, spectrum, r_hat)
    assert np.all(np.diag(A) > 0), "population system is singular"
    return np.linalg.solve(A, b)


@dataclass(eq=False)
class ValueOracle:
    """Ground truth for one (model, reward, discount) triple."""

    spectrum: Callable[[np.ndarray], np.ndarray]
    reward_coeffs: dict[tuple[int, ...], float]
    beta: float
    true_coeffs: dict[tuple[int, ...], float] = field(init=False)

    def __post_init__(self):
        self.spectrum = _spectrum_fn(self.spectrum)
        self.reward_coeffs = {tuple(int(a) for a in k): float(v) for k, v in self.reward_coeffs.items()}
        self.true_coeffs = true_value_coeffs(self.spectrum, self.reward_coeffs, self.beta)

    def discretized_coeffs(self, scheme: DiscretizationScheme) -> dict[tuple[int, ...], float]:
        return discretized_fixed_point_coeffs(scheme, self.spectrum, self.reward_coeffs, self.beta)

    def theta_bar(self, basis: FourierBasis, scheme: DiscretizationScheme) -> np.ndarray:
        return population_theta_bar(basis, scheme, self.spectrum, self.reward_coeffs, self.beta)


def monte_carlo_theta_bar(model, reward, basis, scheme, T_ref: float, seed: int = 0, substeps: int = 16):
    """Fallback target for models without a closed-form spectrum: LSTD on one
    very long trajectory, together with empirical Gram matrices from its states."""
    from .diffusion import simulate_trajectory
    from .lstd import empirical_grams, fit

    traj = simulate_trajectory(model, reward, T_ref, scheme.eta, substeps, seed)
    est = fit(traj, basis, scheme)
    return est.theta_hat, empirical_grams(basis, traj.states)


def write_oracle_csv(path, basis: FourierBasis, columns: Mapping[str, np.ndarray]) -> None:
    """Coefficient dump keyed by ``alpha`` with one column per named vector."""
    names = list(columns)
    with open(path, "w") as fh:
        fh.write(",".join([f"a_{j}" for j in range(basis.d)] + names) + "\n")
        for row, a in enumerate(basis.indices):
            vals = [format(float(columns[n][row]), ".17g") for n in names]
            fh.write(",".join([str(int(v)) for v in a] + vals) + "\n")
