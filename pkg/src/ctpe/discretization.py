"""Order-``nu`` time discretization of the discounted Bellman operator.

The nodes are ``0, eta, ..., (nu - 1) eta``.  ``W_i`` is the Lagrange
polynomial of node ``i`` and ``kappa_i = (1/eta) int_0^{(nu-1) eta}
exp(-beta s) W_i(s) ds`` is the weight put on the reward observed at node ``i``.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath as mp
import numpy as np

MAX_ORDER = 8
_DPS = 40


def _check(nu: int, eta: float) -> None:
    if int(nu) != nu or nu < 2:
        raise ValueError("order nu must be an integer >= 2")
    if nu > MAX_ORDER:
        raise ValueError(f"order nu={nu} > {MAX_ORDER}: equispaced interpolation is too ill-conditioned")
    if not eta > 0:
        raise ValueError("stepsize eta must be positive")


@functools.lru_cache(maxsize=None)
def _unit_lagrange(nu: int) -> list[list[Fraction]]:
    """Exact monomial coefficients of the Lagrange polynomials on nodes ``0..nu-1``."""
    out = []
    for i in range(nu):
        coeffs = [Fraction(1)]
        denom = Fraction(1)
        # smallest factors first keeps intermediate rationals small
        for j in sorted((j for j in range(nu) if j != i), key=lambda j: abs(i - j)):
            new = [Fraction(0)] * (len(coeffs) + 1)
            for k, c in enumerate(coeffs):
                new[k] -= c * j
                new[k + 1] += c
            coeffs = new
            denom *= i - j
        out.append([c / denom for c in coeffs])
    return out


def lagrange_weights(nu: int, eta: float) -> list[np.ndarray]:
    """Monomial coefficients (low degree first) of ``W_0..W_{nu-1}`` in the
    physical variable ``s in [0, (nu - 1) eta]``."""
    _check(nu, eta)
    scale = eta ** -np.arange(nu)
    return [np.array([float(c) for c in w]) * scale for w in _unit_lagrange(nu)]


def _unit_moments(a: float, U: float, kmax: int) -> list:
    """``J_k = int_0^U u^k exp(-a u) du`` for ``k = 0..kmax`` as mpmath numbers.

    Monomial Lagrange coefficients cancel heavily for larger ``nu``; the moments
    and the weighted sums are therefore carried in extended precision.
    """
    a, U = mp.mpf(a), mp.mpf(U)
    if a == 0:
        return [U ** (k + 1) / (k + 1) for k in range(kmax + 1)]
    x = a * U
    if x <= 1:
        # the upward recurrence cancels catastrophically when a*U is small
        J = []
        for k in range(kmax + 1):
            total, term, j = mp.mpf(0), mp.mpf(1), 0
            while True:
                contrib = term / (k + j + 1)
                total += contrib
                if abs(contrib) < mp.mpf(10) ** (-_DPS) * abs(total):
                    break
                j += 1
                term *= -x / j
            J.append(U ** (k + 1) * total)
        return J
    e = mp.exp(-x)
    J = [-mp.expm1(-x) / a]
    for k in range(1, kmax + 1):
        J.append((k * J[k - 1] - U**k * e) / a)
    return J


def exp_moments(L: float, beta: float, kmax: int) -> np.ndarray:
    """``int_0^L s^k exp(-beta s) ds`` for ``k = 0..kmax``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if L == 0:
        return np.zeros(kmax + 1)
    with mp.workdps(_DPS):
        J = _unit_moments(beta * L, 1.0, kmax)
        return np.array([float(j * mp.mpf(L) ** (k + 1)) for k, j in enumerate(J)])


def kappa_coefficients(nu: int, eta: float, beta: float) -> np.ndarray:
    _check(nu, eta)
    if beta < 0:
        raise ValueError("discount rate beta must be nonnegative")
    return _kappas(int(nu), float(eta), float(beta)).copy()


@functools.lru_cache(maxsize=1024)
def _kappas(nu: int, eta: float, beta: float) -> np.ndarray:
    with mp.workdps(_DPS):
        J = _unit_moments(beta * eta, nu - 1, nu - 1)
        # kappa_i = int_0^{nu-1} exp(-beta eta u) W_i(eta u) du
        return np.array(
            [float(mp.fsum(mp.mpf(c.numerator) / c.denominator * J[k] for k, c in enumerate(w))) for w in _unit_lagrange(nu)]
        )


@dataclass(frozen=True, eq=False)
class DiscretizationScheme:
    order: int
    eta: float
    beta: float
    weights: list
    kappas: np.ndarray

    @property
    def horizon(self) -> float:
        """Block length ``(nu - 1) eta``."""
        return (self.order - 1) * self.eta

    @property
    def gamma(self) -> float:
        """Block discount ``exp(-beta (nu - 1) eta)``."""
        return math.exp(-self.beta * self.horizon)

    def weight_values(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.stack([np.polynomial.polynomial.polyval(s, w) for w in self.weights])

    def to_dict(self) -> dict:
        return {"nu": self.order, "eta": self.eta, "beta": self.beta, "kappas": self.kappas.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DiscretizationScheme":
        doc = json.loads(text)
        return make_scheme(doc["nu"], doc["eta"], doc["beta"])


def make_scheme(nu: int, eta: float, beta: float) -> DiscretizationScheme:
    return DiscretizationScheme(int(nu), float(eta), float(beta), lagrange_weights(nu, eta), kappa_coefficients(nu, eta, beta))
