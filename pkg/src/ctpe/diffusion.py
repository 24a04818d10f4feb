"""Diffusion models, noisy rewards and stationary trajectory simulation.

A :class:`DiffusionModel` bundles the drift ``b``, a square root of the
diffusion matrix ``Lambda`` and a sampler for the stationary law.  Models on
the torus with a closed-form semigroup additionally expose the generator
eigenvalue of each Fourier mode through ``spectrum``.

All model callables are vectorized: states come in as ``(N, d)`` arrays.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from ._rng import stream
from .basis import real_fourier_modes

Array = np.ndarray


class StateSpace(str, enum.Enum):
    TORUS = "torus"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class DiffusionModel:
    """Coefficients and stationary law of ``dX = b(X) dt + Lambda^{1/2}(X) dB``."""

    name: str
    dimension: int
    state_space: StateSpace
    drift: Callable[[Array], Array]
    diffusion_sqrt: Callable[[Array], Array]
    stationary_sampler: Callable[[np.random.Generator, int], Array]
    spectrum: Callable[[Array], Array] | None = None
    exact_increments: bool = False
    sigma: float | None = None
    burn_in: float = 0.0
    # eigenvalue bounds of Lambda (uniform ellipticity)
    lambda_min: float = 1.0
    lambda_max: float = 1.0
    params: Mapping[str, float] = field(default_factory=dict)

    def diffusion_matrix(self, x: Array) -> Array:
        s = self.diffusion_sqrt(np.atleast_2d(x))
        return s @ np.swapaxes(s, -1, -2)

    def describe(self) -> dict:
        return {"kind": self.name, "d": self.dimension, **dict(self.params)}


def _wrap(x: Array) -> Array:
    y = x - np.floor(x)
    # x - floor(x) rounds to 1.0 for tiny negative x
    y[y >= 1.0] = 0.0
    return y


def torus_brownian(d: int = 1, sigma: float = 1.0) -> DiffusionModel:
    """Brownian motion ``sigma * B_t`` reduced modulo 1.

    Generator eigenvalue on the mode ``alpha`` is
    ``(sigma^2 / 2) (2 pi)^2 |alpha|_2^2``; the stationary law is uniform.
    """
    if d < 1 or sigma <= 0:
        raise ValueError("need d >= 1 and sigma > 0")
    eye = np.eye(d)

    def drift(x):
        return np.zeros_like(np.atleast_2d(x), dtype=float)

    def diffusion_sqrt(x):
        x = np.atleast_2d(x)
        return np.broadcast_to(sigma * eye, (x.shape[0], d, d))

    def spectrum(alphas):
        alphas = np.atleast_2d(alphas)
        return 0.5 * sigma**2 * (2 * np.pi) ** 2 * np.sum(alphas.astype(float) ** 2, axis=-1)

    def sampler(rng, size):
        return rng.random((size, d))

    return DiffusionModel(
        name="torus_brownian",
        dimension=d,
        state_space=StateSpace.TORUS,
        drift=drift,
        diffusion_sqrt=diffusion_sqrt,
        stationary_sampler=sampler,
        spectrum=spectrum,
        exact_increments=True,
        sigma=sigma,
        lambda_min=sigma**2,
        lambda_max=sigma**2,
        params={"sigma": sigma},
    )


def torus_langevin(
    d: int = 1,
    sigma: float = 1.0,
    amplitude: float = 0.25,
    rho_hat: float = 1.0,
    burn_in: float | None = None,
) -> DiffusionModel:
    """Overdamped Langevin dynamics in the periodic potential
    ``U(x) = amplitude * sum_j cos(2 pi x_j)``.

    The drift is ``-grad U`` and ``Lambda = sigma^2 I``, so the stationary density
    is proportional to ``exp(-2 U / sigma^2)``, a product of von Mises laws.  The
    initial state is drawn from that law and then relaxed for ``burn_in`` time
    units under the Euler-Maruyama chain (default ``10 / (sigma^2 * rho_hat)``)
    to remove the mismatch with the discretized chain's own stationary law.
    """
    if d < 1 or sigma <= 0 or rho_hat <= 0:
        raise ValueError("need d >= 1, sigma > 0, rho_hat > 0")
    eye = np.eye(d)
    kappa = 2.0 * amplitude / sigma**2
    if burn_in is None:
        burn_in = 10.0 / (sigma**2 * rho_hat)

    def drift(x):
        x = np.atleast_2d(x)
        return 2 * np.pi * amplitude * np.sin(2 * np.pi * x)

    def diffusion_sqrt(x):
        x = np.atleast_2d(x)
        return np.broadcast_to(sigma * eye, (x.shape[0], d, d))

    def sampler(rng, size):
        theta = rng.vonmises(np.pi, kappa, size=(size, d)) if kappa > 0 else rng.uniform(-np.pi, np.pi, (size, d))
        return _wrap(theta / (2 * np.pi))

    return DiffusionModel(
        name="torus_langevin",
        dimension=d,
        state_space=StateSpace.TORUS,
        drift=drift,
        diffusion_sqrt=diffusion_sqrt,
        stationary_sampler=sampler,
        sigma=sigma,
        burn_in=float(burn_in),
        lambda_min=sigma**2,
        lambda_max=sigma**2,
        params={"sigma": sigma, "amplitude": amplitude, "rho_hat": rho_hat},
    )


def ornstein_uhlenbeck(d: int = 1, theta: float = 1.0, sigma: float = 1.0) -> DiffusionModel:
    """Euclidean OU process ``dX = -theta X dt + sigma dB``, started from its
    Gaussian stationary law ``N(0, sigma^2 / (2 theta) I)``."""
    if d < 1 or theta <= 0 or sigma <= 0:
        raise ValueError("need d >= 1, theta > 0, sigma > 0")
    eye = np.eye(d)
    sd = sigma / math.sqrt(2 * theta)

    def drift(x):
        return -theta * np.atleast_2d(x)

    def diffusion_sqrt(x):
        x = np.atleast_2d(x)
        return np.broadcast_to(sigma * eye, (x.shape[0], d, d))

    def sampler(rng, size):
        return sd * rng.standard_normal((size, d))

    return DiffusionModel(
        name="ornstein_uhlenbeck",
        dimension=d,
        state_space=StateSpace.EUCLIDEAN,
        drift=drift,
        diffusion_sqrt=diffusion_sqrt,
        stationary_sampler=sampler,
        sigma=sigma,
        lambda_min=sigma**2,
        lambda_max=sigma**2,
        params={"sigma": sigma, "theta": theta},
    )


@dataclass(frozen=True)
class RewardSpec:
    """Mean reward ``r`` plus additive ``Uniform(-eps, eps)`` observation noise.

    ``sup_bound`` must upper-bound ``sup |r|``; it is derived automatically for
    Fourier rewards and drives the ``|R| <= 1`` admissibility check.
    """

    mean_reward: Callable[[Array], Array]
    noise_half_width: float = 0.1
    sup_bound: float | None = None
    fourier_coeffs: Mapping[tuple[int, ...], float] | None = None

    @classmethod
    def from_fourier(cls, coeffs: Mapping[tuple[int, ...], float], noise_half_width: float = 0.1) -> "RewardSpec":
        """Reward ``sum_alpha c_alpha psi_alpha(x)`` in the real Fourier encoding
        (``psi_0 = 1``, cosine for the positive representative of a pair, sine for
        its negation)."""
        if not coeffs:
            raise ValueError("empty coefficient map")
        items = [(tuple(int(a) for a in k), float(v)) for k, v in coeffs.items()]
        alphas = np.array([k for k, _ in items], dtype=int)
        values = np.array([v for _, v in items])
        sup = float(sum(abs(v) * (1.0 if not any(k) else math.sqrt(2)) for k, v in items))

        def r(x):
            return real_fourier_modes(alphas, np.atleast_2d(x)) @ values

        return cls(r, noise_half_width, sup, dict(items))

    @classmethod
    def constant(cls, c: float, d: int = 1, noise_half_width: float = 0.0) -> "RewardSpec":
        return cls.from_fourier({(0,) * d: c}, noise_half_width)

    def check_admissible(self) -> None:
        if not 0.0 <= self.noise_half_width < 1.0:
            raise ValueError("noise half-width must lie in [0, 1)")
        if self.sup_bound is None:
            raise ValueError("reward has no sup bound; cannot certify |R| <= 1")
        if self.sup_bound + self.noise_half_width > 1.0 + 1e-12:
            raise ValueError(
                f"sup|r| + eps = {self.sup_bound + self.noise_half_width:.6g} exceeds 1; rewards would be unbounded"
            )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Discretely observed stationary path.

    ``states[k]`` and ``rewards[k]`` are the observation at time ``k * eta``.
    ``inner_states`` (if kept) lives on the finer grid ``eta / substeps`` and
    satisfies ``inner_states[::substeps] == states``.
    """

    eta: float
    substeps: int
    states: Array
    rewards: Array
    seed: int
    total_time: float
    inner_states: Array | None = None

    @property
    def n_obs(self) -> int:
        return self.states.shape[0]

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> Array:
        return self.eta * np.arange(self.n_obs)

    @property
    def inner_step(self) -> float:
        return self.eta / self.substeps

    def drop_first(self, count: int = 1) -> "Trajectory":
        inner = None
        if self.inner_states is not None:
            inner = self.inner_states[count * self.substeps :]
        return Trajectory(
            self.eta,
            self.substeps,
            self.states[count:],
            self.rewards[count:],
            self.seed,
            self.total_time - count * self.eta,
            inner,
        )

    def to_csv(self, path: str | Path) -> None:
        d = self.dimension
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "t"] + [f"x_{j}" for j in range(d)] + ["reward"])
            for k in range(self.n_obs):
                w.writerow([k, _fmt(k * self.eta)] + [_fmt(v) for v in self.states[k]] + [_fmt(self.rewards[k])])

    def inner_to_csv(self, path: str | Path) -> None:
        if self.inner_states is None:
            raise ValueError("trajectory was simulated without inner states")
        d = self.dimension
        h = self.inner_step
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["j", "t"] + [f"x_{i}" for i in range(d)])
            for j, x in enumerate(self.inner_states):
                w.writerow([j, _fmt(j * h)] + [_fmt(v) for v in x])

    @classmethod
    def from_csv(
        cls, path: str | Path, substeps: int = 1, inner_path: str | Path | None = None, seed: int = -1
    ) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 1]
        eta = float(t[1] - t[0])
        states = data[:, 2:-1]
        rewards = data[:, -1]
        inner = None
        if inner_path is not None:
            inner = np.loadtxt(inner_path, delimiter=",", skiprows=1, ndmin=2)[:, 2:]
            substeps = (inner.shape[0] - 1) // (states.shape[0] - 1)
        return cls(eta, substeps, states, rewards, seed, float(t[-1]), inner)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def n_steps_for(T: float, eta: float) -> int:
    """``floor(T / eta)``, tolerant to representation error (``1 / 0.1``)."""
    q = T / eta
    k = math.floor(q)
    if q - k > 1 - 1e-9:
        k += 1
    return k


def simulate_trajectory(
    model: DiffusionModel,
    reward: RewardSpec,
    T: float,
    eta: float,
    substeps: int = 16,
    seed: int = 0,
    keep_inner: bool = False,
) -> Trajectory:
    """Simulate a stationary path observed every ``eta`` time units.

    The path is advanced on the ``eta / substeps`` grid: exactly (Gaussian
    increments, wrapped mod 1) for models flagged ``exact_increments``, by
    Euler-Maruyama otherwise.  Rewards are drawn only at observation times.
    """
    if eta <= 0 or T <= 0:
        raise ValueError("T and eta must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    reward.check_admissible()
    n_steps = n_steps_for(T, eta)
    if n_steps < 1:
        raise ValueError("T must cover at least one observation step")
    d = model.dimension
    h = eta / substeps
    n_inner = n_steps * substeps

    x0 = np.asarray(model.stationary_sampler(stream(seed, "init"), 1), dtype=float).reshape(d)
    if model.burn_in > 0 and not model.exact_increments:
        n_burn = int(math.ceil(model.burn_in / h))
        noise = stream(seed, "burnin").standard_normal((n_burn, d)) * math.sqrt(h)
        x0 = _euler_maruyama(model, x0, noise, h)[-1]

    dw = stream(seed, "increments").standard_normal((n_inner, d)) * math.sqrt(h)
    if model.exact_increments:
        path = np.empty((n_inner + 1, d))
        path[0] = x0
        np.cumsum(model.sigma * dw, axis=0, out=path[1:])
        path[1:] += x0
    else:
        path = _euler_maruyama(model, x0, dw, h)
    if model.state_space is StateSpace.TORUS:
        path = _wrap(path)

    states = np.ascontiguousarray(path[::substeps])
    noise = reward.noise_half_width
    r = np.asarray(reward.mean_reward(states), dtype=float)
    if noise > 0:
        r = r + stream(seed, "reward").uniform(-noise, noise, size=r.shape)
    return Trajectory(
        eta=float(eta),
        substeps=int(substeps),
        states=states,
        rewards=r,
        seed=int(seed),
        total_time=float(T),
        inner_states=path if keep_inner else None,
    )


def _euler_maruyama(model: DiffusionModel, x0: Array, dw: Array, h: float) -> Array:
    out = np.empty((dw.shape[0] + 1, x0.shape[0]))
    out[0] = x0
    x = x0[None, :]
    for j in range(dw.shape[0]):
        s = model.diffusion_sqrt(x)[0]
        x = x + model.drift(x) * h + (s @ dw[j])[None, :]
        out[j + 1] = x[0]
    return out


def _window_weights(beta: float, n_points: int, h: float) -> Array:
    w = np.full(n_points, h)
    w[0] = w[-1] = h / 2
    return w * np.exp(-beta * h * np.arange(n_points))


def window_integrals(traj: Trajectory, values: Array, beta: float, n_steps: int = 1) -> Array:
    """Trapezoid integrals of ``exp(-beta t) * v(X_{k eta + t})`` over
    ``t in [0, n_steps * eta]`` for every admissible start index ``k``.

    ``values`` holds ``v`` evaluated on the inner grid (length
    ``len(traj.inner_states)``); trailing axes are carried through.
    """
    s = traj.substeps
    length = n_steps * s
    values = np.asarray(values, dtype=float)
    if values.shape[0] < length + 1:
        raise ValueError("trajectory shorter than one window")
    w = _window_weights(beta, length + 1, traj.inner_step)
    view = np.lib.stride_tricks.sliding_window_view(values, length + 1, axis=0)[::s]
    return np.tensordot(view, w, axes=([-1], [0]))


def integrate_path_functional(
    traj: Trajectory, phi: Callable[[Array], Array], k: int, beta: float, n_steps: int = 1
) -> float:
    """``int_0^{n_steps * eta} exp(-beta t) phi(X_{k eta + t}) dt`` by the
    trapezoid rule on the stored inner grid."""
    if traj.inner_states is None:
        raise ValueError("inner states are required; simulate with keep_inner=True")
    s = traj.substeps
    lo, hi = k * s, (k + n_steps) * s
    if k < 0 or hi > traj.inner_states.shape[0] - 1:
        raise IndexError("window extends past the end of the trajectory")
    vals = np.asarray(phi(traj.inner_states[lo : hi + 1]), dtype=float)
    return float(_window_weights(beta, hi - lo + 1, traj.inner_step) @ vals)
