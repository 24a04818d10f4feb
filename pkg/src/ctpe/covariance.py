"""Empirical diagnostics for the Markovian and martingale parts of the LSTD noise.

The Markovian part is driven by the path functional

    U_k = f(X_{k eta}) / eta * int_0^eta exp(-beta t) ((beta - A) g)(X_{k eta + t}) dt

whose lag covariances ``mu_k = cov(U_0, U_k)`` sum to the asymptotic variance
``sigma_mkv^2 = eta mu_0 + 2 eta sum_{k >= 1} mu_k``.  Covariances are
estimated from disjoint window pairs tiled along one trajectory, so the
reported standard errors come from the spread of independent-ish replicates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .basis import FourierBasis, FunctionInSpan
from .diffusion import Trajectory, window_integrals
from .discretization import DiscretizationScheme

MIN_WINDOWS = 30
MIN_SUBSTEPS = 16
_CHUNK = 65_536


def _require_inner(traj: Trajectory) -> None:
    if traj.inner_states is None:
        raise ValueError("covariance diagnostics need inner states (simulate with keep_inner=True)")
    if traj.substeps < MIN_SUBSTEPS:
        raise ValueError(f"covariance diagnostics need substeps >= {MIN_SUBSTEPS}")


def _chunked(fn, x: np.ndarray) -> np.ndarray:
    return np.concatenate([fn(x[i : i + _CHUNK]) for i in range(0, x.shape[0], _CHUNK)])


def residual_functionals(
    traj: Trajectory, f: FunctionInSpan, g: FunctionInSpan, beta: float, model, window_steps: int = 1
) -> np.ndarray:
    """``U_k`` for every start index ``k`` whose window fits in the trajectory."""
    _require_inner(traj)
    if not isinstance(g, FunctionInSpan):
        raise TypeError("g must be a function in the feature span")
    inner = traj.inner_states
    resid = _chunked(lambda x: beta * g(x) - g.generator(model, x), inner)
    integrals = window_integrals(traj, resid, beta, window_steps) / traj.eta
    return f(traj.states[: integrals.shape[0]]) * integrals


def lagged_covariance(u: np.ndarray, k: int, window_steps: int = 1) -> tuple[float, float, int]:
    """Sample covariance of ``(u[j], u[j + k])`` over disjoint blocks of
    ``k + window_steps`` steps.  Returns ``(estimate, stderr, n_pairs)``."""
    if k < 0:
        raise ValueError("lag must be nonnegative")
    block = k + window_steps
    starts = np.arange(0, u.shape[0] - k, block)
    n = starts.size
    if n < MIN_WINDOWS:
        raise ValueError(f"only {n} disjoint window pairs at lag {k}; need {MIN_WINDOWS}")
    a = u[starts]
    b = u[starts + k]
    prod = (a - a.mean()) * (b - b.mean())
    est = prod.sum() / (n - 1)
    se = prod.std(ddof=1) / math.sqrt(n)
    return float(est), float(se), int(n)


def estimate_mu_k(
    traj: Trajectory,
    f: FunctionInSpan,
    g: FunctionInSpan,
    scheme: DiscretizationScheme,
    k: int,
    model,
    window_steps: int = 1,
) -> tuple[float, float]:
    u = residual_functionals(traj, f, g, scheme.beta, model, window_steps)
    est, se, _ = lagged_covariance(u, k, window_steps)
    return est, se


@dataclass(frozen=True)
class CovarianceDiagnostics:
    mu: np.ndarray
    stderr: np.ndarray
    sigma_mkv: float
    sigma_stderr: float
    K_max: int
    stable: bool
    martingale_proxy: float | None = None
    f_desc: str = ""
    g_desc: str = ""

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,mu_hat,stderr\n")
            for k, (m, s) in enumerate(zip(self.mu, self.stderr)):
                fh.write(f"{k},{m:.17g},{s:.17g}\n")

    def summary(self) -> dict:
        return {
            "sigma_mkv": self.sigma_mkv,
            "sigma_stderr": self.sigma_stderr,
            "K_max": self.K_max,
            "stable": self.stable,
            "martingale_proxy": self.martingale_proxy,
            "f": self.f_desc,
            "g": self.g_desc,
        }

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def _partial(mu, se, eta, K):
    est = eta * mu[0] + 2 * eta * mu[1 : K + 1].sum()
    var = (eta * se[0]) ** 2 + np.sum((2 * eta * se[1 : K + 1]) ** 2)
    return est, math.sqrt(var)


def estimate_sigma_mkv(
    traj: Trajectory,
    f: FunctionInSpan,
    g: FunctionInSpan,
    scheme: DiscretizationScheme,
    K_max: int,
    model,
    window_steps: int = 1,
) -> CovarianceDiagnostics:
    """Truncated series ``eta mu_0 + 2 eta sum_{k=1}^{K_max} mu_k``.

    Lags up to ``2 K_max`` are estimated; the result is flagged stable when
    extending the sum from ``K_max`` to ``2 K_max`` moves it by less than three
    standard errors of the added tail.
    """
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    u = residual_functionals(traj, f, g, scheme.beta, model, window_steps)
    rows = [lagged_covariance(u, k, window_steps) for k in range(2 * K_max + 1)]
    mu = np.array([r[0] for r in rows])
    se = np.array([r[1] for r in rows])
    eta = traj.eta
    sigma, sigma_se = _partial(mu, se, eta, K_max)
    sigma2, _ = _partial(mu, se, eta, 2 * K_max)
    tail_se = 2 * eta * math.sqrt(np.sum(se[K_max + 1 :] ** 2))
    stable = abs(sigma2 - sigma) <= 3 * tail_se
    return CovarianceDiagnostics(mu, se, float(sigma), float(sigma_se), K_max, bool(stable))


def martingale_variance_proxy(
    traj: Trajectory,
    theta_bar: np.ndarray,
    basis: FourierBasis,
    scheme: DiscretizationScheme,
    model,
    n_batches: int = 32,
    return_stderr: bool = False,
):
    """Window average of
    ``|H1^{-1/2} psi(X_0)|^2 * (1/eta) int_0^eta exp(-2 beta t) grad f_bar^T Lambda grad f_bar (X_t) dt``.

    The standard error (``return_stderr=True``) uses batch means over
    ``n_batches`` contiguous batches of windows.
    """
    _require_inner(traj)
    f_bar = FunctionInSpan(np.asarray(theta_bar, dtype=float), basis)

    def energy(x):
        grad = f_bar.gradient(x)
        lam = model.diffusion_matrix(x)
        return np.einsum("nd,nde,ne->n", grad, lam, grad)

    e = _chunked(energy, traj.inner_states)
    integrals = window_integrals(traj, e, 2 * scheme.beta, 1) / traj.eta
    psi = basis.features(traj.states[: integrals.shape[0]])
    weight = np.sum(psi**2 / basis.h1_diag, axis=1)
    vals = weight * integrals
    value = float(vals.mean())
    if not return_stderr:
        return value
    nb = min(n_batches, vals.size)
    usable = vals[: vals.size - vals.size % nb].reshape(nb, -1).mean(axis=1)
    return value, float(usable.std(ddof=1) / math.sqrt(nb))
