"""Sobolev error metrics, the trace complexity ``Tr(H1^{-1} H0)`` and log-log
rate fits.

Norms of span functions are exact coefficient sums.  For the real Fourier
features the Gram matrices are diagonal, so

    |f|_{L2}^2 = sum c_a^2
    |f|_{H1}^2 = sum (1 + (2 pi)^2 |a|^2) c_a^2
    |f|_{H2}^2 = sum (1 + (2 pi)^2 |a|^2 + (2 pi)^4 |a|^4) c_a^2
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, NamedTuple

import numpy as np
from scipy import stats

from .basis import TWO_PI, FourierBasis, generator_action

Coeffs = Mapping[tuple[int, ...], float]


def mode_weights(alphas: np.ndarray, order: int) -> np.ndarray:
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    sq = np.sum(np.atleast_2d(alphas).astype(float) ** 2, axis=1)
    w = np.ones_like(sq)
    if order >= 1:
        w = w + TWO_PI**2 * sq
    if order >= 2:
        # squared Frobenius norm of the Hessian -(2 pi)^2 a a^T
        w = w + TWO_PI**4 * sq**2
    return w


def sobolev_norm(coeffs: Coeffs, order: int = 1) -> float:
    if not coeffs:
        return 0.0
    keys = list(coeffs)
    c = np.array([coeffs[k] for k in keys], dtype=float)
    return float(np.sqrt(np.sum(mode_weights(np.array(keys), order) * c**2)))


def coeff_difference(a: Coeffs, b: Coeffs) -> dict[tuple[int, ...], float]:
    out = {k: float(v) for k, v in a.items()}
    for k, v in b.items():
        out[k] = out.get(k, 0.0) - float(v)
    return out


def quadratic_norm(delta: np.ndarray, gram: np.ndarray) -> float:
    """``sqrt(delta^T H delta)`` for bases with non-diagonal Gram matrices."""
    return float(np.sqrt(max(delta @ gram @ delta, 0.0)))


def trace_ratio(basis: FourierBasis) -> float:
    """``Tr(H1^{-1} H0) = sum_a 1 / (1 + (2 pi)^2 |a|^2)``."""
    return float(np.sum(1.0 / basis.h1_diag))


def trace_ratio_from_grams(H0: np.ndarray, H1: np.ndarray) -> float:
    return float(np.trace(np.linalg.solve(H1, H0)))


def feature_bound_estimate(basis: FourierBasis, model, points: np.ndarray) -> float:
    """Grid estimate of the smallest ``D_m`` with
    ``sup_x |H1^{-1/2} psi(x)| * sup_y (|H1^{-1/2} psi(y)| + |H1^{-1/2} grad psi(y)|_F
    + |H1^{-1/2} A psi(y)|) <= D_m^2``.  A lower estimate, not a certified bound."""
    s = 1.0 / np.sqrt(basis.h1_diag)
    psi = basis.features(points) * s
    grad = basis.gradients(points) * s[None, :, None]
    gen = generator_action(basis, model, points) * s
    a = np.linalg.norm(psi, axis=1)
    b = a + np.sqrt(np.sum(grad**2, axis=(1, 2))) + np.linalg.norm(gen, axis=1)
    return float(np.sqrt(a.max() * b.max()))


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def fit_rate(xs, ys) -> RateFit:
    """Least squares line through ``(ln x, ln y)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 3:
        raise ValueError("need at least three (x, y) pairs")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("rate fits need positive inputs")
    res = stats.linregress(np.log(xs), np.log(ys))
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue**2))


@dataclass(frozen=True)
class ErrorReport:
    l2_error: float
    h1_error: float
    h2_error: float
    approx_h1: float
    stat_h1: float
    n: int
    m: int
    T: float
    eta: float
    nu: int
    seed: int

    @property
    def total_h1(self) -> float:
        return self.h1_error

    def as_dict(self) -> dict:
        return asdict(self)


def error_report(
    theta_hat: np.ndarray,
    theta_bar: np.ndarray,
    basis: FourierBasis,
    true_coeffs: Coeffs,
    *,
    T: float,
    eta: float,
    nu: int,
    seed: int,
) -> ErrorReport:
    """Split ``f_hat - f*`` into approximation (``f_bar - f*``) and statistical
    (``f_hat - f_bar``) parts, all measured exactly in coefficient space."""
    f_hat = basis.coeff_map(theta_hat)
    f_bar = basis.coeff_map(theta_bar)
    total = coeff_difference(f_hat, true_coeffs)
    return ErrorReport(
        l2_error=sobolev_norm(total, 0),
        h1_error=sobolev_norm(total, 1),
        h2_error=sobolev_norm(total, 2),
        approx_h1=sobolev_norm(coeff_difference(f_bar, true_coeffs), 1),
        stat_h1=sobolev_norm(coeff_difference(f_hat, f_bar), 1),
        n=basis.n,
        m=basis.m,
        T=T,
        eta=eta,
        nu=nu,
        seed=seed,
    )
