"""Plug-in advantage functions from a value estimate.

For a controlled drift ``g(x, a)`` and a policy whose averaged drift is
``b_pi(x)``, the advantage is ``q(x, a) = <grad f(x), g(x, a) - b_pi(x)>``.
In the control-affine case ``g(x, a) = b(x) + a`` this reduces to
``<grad f(x), a - mean_action(x)>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import FunctionInSpan
from .metrics import coeff_difference, sobolev_norm


@dataclass(frozen=True, eq=False)
class ControlAffinePolicy:
    """Policy over the box ``[low, high]``.

    ``drift_gap`` optionally overrides ``g(x, a) - b_pi(x)`` for non-affine
    dynamics; it receives ``(x, a)`` batches of shape ``(N, d)``.
    """

    low: np.ndarray
    high: np.ndarray
    mean_action: Callable[[np.ndarray], np.ndarray]
    base_drift: Callable[[np.ndarray], np.ndarray] | None = None
    drift_gap: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        object.__setattr__(self, "low", np.atleast_1d(np.asarray(self.low, dtype=float)))
        object.__setattr__(self, "high", np.atleast_1d(np.asarray(self.high, dtype=float)))
        if self.low.shape != self.high.shape or np.any(self.high < self.low):
            raise ValueError("invalid action box")

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.high - self.low))

    def contains(self, a: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        a = np.atleast_2d(a)
        return np.all((a >= self.low - tol) & (a <= self.high + tol), axis=1)

    def displacement(self, x: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self.drift_gap is not None:
            return np.atleast_2d(self.drift_gap(x, a))
        return np.atleast_2d(a) - np.atleast_2d(self.mean_action(x))


@dataclass(frozen=True, eq=False)
class AdvantageEstimate:
    value: FunctionInSpan
    policy: ControlAffinePolicy

    def __call__(self, x, a):
        return advantage(self, x, a)


def advantage(est: AdvantageEstimate, x, a):
    """``q_hat(x, a)``; scalar for a single pair, vector for ``(N, d)`` batches."""
    x = np.asarray(x, dtype=float)
    d = est.value.basis.d
    single = x.size == d
    x = x.reshape(-1, d)
    a = np.asarray(a, dtype=float).reshape(x.shape[0], -1)
    if not np.all(est.policy.contains(a)):
        raise ValueError("action outside the action box")
    q = np.sum(est.value.gradient(x) * est.policy.displacement(x, a), axis=1)
    return float(q[0]) if single else q


@dataclass(frozen=True)
class AdvantageBoundReport:
    max_sq_error: float
    mean_sq_error: float
    rhs: float
    holds_pointwise: bool
    holds_in_mean: bool
    n_samples: int


def advantage_error_bound_check(
    f_hat: FunctionInSpan,
    f_true: FunctionInSpan,
    policy: ControlAffinePolicy,
    sample_states: np.ndarray,
    sample_actions: np.ndarray,
) -> AdvantageBoundReport:
    """Compare ``|q_hat - q|^2`` on samples against ``diam(A)^2 |f_hat - f|_{H1}^2``.

    ``holds_pointwise`` checks every sampled pair; ``holds_in_mean`` checks the
    average over states (the form that holds for every policy).  Both functions
    must live on the same basis.
    """
    if f_hat.basis.m != f_true.basis.m or not np.array_equal(f_hat.basis.indices, f_true.basis.indices):
        raise ValueError("f_hat and f_true must share a coefficient space")
    diff = coeff_difference(f_hat.as_map(), f_true.as_map())
    rhs = policy.diameter**2 * sobolev_norm(diff, 1) ** 2
    q_hat = advantage(AdvantageEstimate(f_hat, policy), sample_states, sample_actions)
    q = advantage(AdvantageEstimate(f_true, policy), sample_states, sample_actions)
    sq = np.atleast_1d((q_hat - q) ** 2)
    slack = 1e-12 * max(rhs, 1.0)
    return AdvantageBoundReport(
        max_sq_error=float(sq.max()),
        mean_sq_error=float(sq.mean()),
        rhs=float(rhs),
        holds_pointwise=bool(sq.max() <= rhs + slack),
        holds_in_mean=bool(sq.mean() <= rhs + slack),
        n_samples=int(sq.size),
    )


def advantage_grid(est: AdvantageEstimate, xs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Rows ``(x, a, q_hat)`` on the product grid for one-dimensional problems."""
    X, A = np.meshgrid(np.asarray(xs, dtype=float), np.asarray(actions, dtype=float), indexing="ij")
    q = advantage(est, X.reshape(-1, 1), A.reshape(-1, 1))
    return np.column_stack([X.ravel(), A.ravel(), q])
