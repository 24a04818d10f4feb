"""Single-trajectory LSTD for the order-``nu`` discretized Bellman equation.

With ``gamma = exp(-beta (nu - 1) eta)`` and ``N = floor(T / eta) - nu + 1``
blocks (every start index ``k``, overlapping), the normal equations are

    A_N = 1/(N eta) sum_k psi(X_k) (psi(X_k) - gamma psi(X_{k+nu-1}))^T
    b_N = 1/N       sum_k (sum_i kappa_i R_{k+i}) psi(X_k)

and ``theta_hat`` solves ``A_N theta = b_N``.  The scaling keeps both sides
O(1) as ``T`` grows; the solution is unaffected by it.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import FourierBasis, FunctionInSpan
from .diffusion import Trajectory
from .discretization import DiscretizationScheme

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12


class SolverPolicy(str, enum.Enum):
    STRICT = "strict"
    RIDGE = "ridge"


class TrajectoryTooShortError(ValueError):
    pass


class IllConditionedError(np.linalg.LinAlgError):
    """Raised by the strict solver; usually means ``T`` is below the length
    needed for the empirical system to concentrate."""

    def __init__(self, cond: float):
        super().__init__(f"LSTD system is ill-conditioned (cond = {cond:.3e} > {MAX_CONDITION:.0e})")
        self.cond = cond


@dataclass(frozen=True)
class SolveReport:
    cond: float
    policy: SolverPolicy
    ridge: float = 0.0

    @property
    def flags(self) -> list[str]:
        return ["ridge"] if self.policy is SolverPolicy.RIDGE else []


@dataclass(eq=False)
class LstdEstimate:
    theta_hat: np.ndarray
    A_hat: np.ndarray
    b_hat: np.ndarray
    N: int
    condition_estimate: float
    scheme: DiscretizationScheme
    basis: FourierBasis
    flags: list[str] = field(default_factory=list)

    def value(self) -> FunctionInSpan:
        return estimate_value(self.theta_hat, self.basis)

    def to_json(self) -> str:
        return json.dumps(
            {
                "theta": self.theta_hat.tolist(),
                "N": self.N,
                "cond": self.condition_estimate,
                "scheme": self.scheme.to_dict(),
                "basis_ref": {"d": self.basis.d, "n": self.basis.n, "m": self.basis.m},
                "flags": self.flags,
            }
        )


def block_count(traj: Trajectory, nu: int) -> int:
    return traj.n_obs - 1 - nu + 1


def block_rewards(rewards: np.ndarray, kappas: np.ndarray, N: int) -> np.ndarray:
    """``sum_i kappa_i R_{k+i}`` for ``k = 0..N-1``."""
    out = np.zeros(N)
    for i, kap in enumerate(kappas):
        out += kap * rewards[i : i + N]
    return out


def assemble(traj: Trajectory, basis: FourierBasis, scheme: DiscretizationScheme) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ``(A_N, b_N)``; the estimator only sees ``(X_{k eta}, R_{k eta})``."""
    if not np.isclose(traj.eta, scheme.eta, rtol=1e-12, atol=0):
        raise ValueError("trajectory and scheme use different stepsizes")
    nu = scheme.order
    N = block_count(traj, nu)
    if N < 1:
        raise TrajectoryTooShortError(f"need floor(T/eta) >= nu = {nu}; trajectory has {traj.n_obs - 1} steps")
    psi = basis.features(traj.states)
    head = psi[:N]
    tail = psi[nu - 1 : nu - 1 + N]
    A = head.T @ (head - scheme.gamma * tail) / (N * scheme.eta)
    b = head.T @ block_rewards(traj.rewards, scheme.kappas, N) / N
    return A, b


def solve(
    A: np.ndarray, b: np.ndarray, policy: SolverPolicy | str = SolverPolicy.STRICT, ridge: float | None = None
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A theta = b``.

    ``strict`` refuses systems with condition number above ``1e12``.  ``ridge``
    solves ``(A + lam I) theta = b`` with ``lam = 1e-8 tr(A) / m`` by default.
    """
    policy = SolverPolicy(policy)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
        raise ValueError("need a square system")
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond):
        cond = float("inf")
    if policy is SolverPolicy.STRICT:
        if cond > MAX_CONDITION:
            raise IllConditionedError(cond)
        return np.linalg.solve(A, b), SolveReport(cond, policy)
    m = A.shape[0]
    lam = ridge if ridge is not None else 1e-8 * abs(np.trace(A)) / m
    if lam <= 0:
        lam = 1e-8
    logger.info("ridge-regularized LSTD solve, lambda=%.3e, cond=%.3e", lam, cond)
    return np.linalg.solve(A + lam * np.eye(m), b), SolveReport(cond, policy, lam)


def fit(
    traj: Trajectory,
    basis: FourierBasis,
    scheme: DiscretizationScheme,
    policy: SolverPolicy | str = SolverPolicy.STRICT,
) -> LstdEstimate:
    A, b = assemble(traj, basis, scheme)
    theta, report = solve(A, b, policy)
    return LstdEstimate(theta, A, b, block_count(traj, scheme.order), report.cond, scheme, basis, report.flags)


def estimate_value(theta: np.ndarray, basis: FourierBasis) -> FunctionInSpan:
    return FunctionInSpan(np.asarray(theta, dtype=float), basis)


def empirical_grams(basis: FourierBasis, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``H_0 = E[psi psi^T]`` and ``H_1 = H_0 + E[grad psi grad psi^T]``
    for stationary laws without a closed form."""
    psi = basis.features(states)
    grad = basis.gradients(states)
    n = psi.shape[0]
    H0 = psi.T @ psi / n
    H1 = H0 + np.einsum("nid,njd->ij", grad, grad) / n
    return H0, H1
