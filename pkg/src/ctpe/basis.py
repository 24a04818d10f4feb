"""Real Fourier features on the torus ``[0, 1)^d``.

Multi-indices ``alpha`` with ``|alpha|_1 <= n`` are encoded in real form.
A nonzero index whose first nonzero entry is positive (the *positive
representative* of the pair ``{alpha, -alpha}``) carries
``sqrt(2) cos(2 pi <alpha, x>)``; its negation carries
``sqrt(2) sin(2 pi <alpha, x>)``.  The constant feature sits at ``alpha = 0``.
Under the uniform law the features are orthonormal, and each pair spans the
same space as the complex exponentials ``exp(+-2 pi i <alpha, x>)``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np

TWO_PI = 2.0 * np.pi
SQRT2 = math.sqrt(2.0)
DEFAULT_MAX_FEATURES = 20_000

CONST, COS, SIN = 0, 1, 2


def _positive_rep(alpha: np.ndarray) -> tuple[np.ndarray, int]:
    nz = np.flatnonzero(alpha)
    if nz.size == 0:
        return alpha, CONST
    if alpha[nz[0]] > 0:
        return alpha, COS
    return -alpha, SIN


def _decode(alphas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    alphas = np.atleast_2d(np.asarray(alphas, dtype=int))
    freq = np.empty_like(alphas)
    kind = np.empty(alphas.shape[0], dtype=int)
    for j, a in enumerate(alphas):
        freq[j], kind[j] = _positive_rep(a)
    return freq, kind


def real_fourier_modes(alphas: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the real features for arbitrary multi-indices at ``x`` (N, d)."""
    freq, kind = _decode(alphas)
    return _eval(freq, kind, np.atleast_2d(x))


def _eval(freq, kind, x):
    phase = TWO_PI * (x @ freq.T)
    out = np.where(kind == COS, SQRT2 * np.cos(phase), SQRT2 * np.sin(phase))
    out[:, kind == CONST] = 1.0
    return out


def lattice_count(d: int, n: int) -> int:
    """Number of ``alpha in Z^d`` with ``|alpha|_1 <= n``."""
    return sum(2**k * math.comb(d, k) * math.comb(n, k) for k in range(min(d, n) + 1))


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    d: int
    n: int
    indices: np.ndarray  # (m, d) ints in canonical order

    @property
    def m(self) -> int:
        return self.indices.shape[0]

    @classmethod
    def build(cls, d: int, n: int, max_features: int = DEFAULT_MAX_FEATURES) -> "MultiIndexSet":
        """Canonical order: ``0`` first, then positive representatives sorted by
        (``l1`` norm, lexicographic), each immediately followed by its negation."""
        if d < 1 or n < 0:
            raise ValueError("need d >= 1 and n >= 0")
        m = lattice_count(d, n)
        if m > max_features:
            raise ValueError(f"basis size m={m} exceeds cap {max_features}")
        reps = []
        for a in itertools.product(range(-n, n + 1), repeat=d):
            l1 = sum(abs(v) for v in a)
            if 0 < l1 <= n and next(v for v in a if v != 0) > 0:
                reps.append((l1, a))
        reps.sort()
        rows = [(0,) * d]
        for _, a in reps:
            rows.append(a)
            rows.append(tuple(-v for v in a))
        return cls(d, n, np.array(rows, dtype=int).reshape(-1, d))


@dataclass(frozen=True, eq=False)
class FourierBasis:
    index_set: MultiIndexSet

    @property
    def d(self) -> int:
        return self.index_set.d

    @property
    def n(self) -> int:
        return self.index_set.n

    @property
    def m(self) -> int:
        return self.index_set.m

    @property
    def indices(self) -> np.ndarray:
        return self.index_set.indices

    @cached_property
    def _decoded(self):
        return _decode(self.indices)

    @property
    def freq(self) -> np.ndarray:
        return self._decoded[0]

    @property
    def kind(self) -> np.ndarray:
        return self._decoded[1]

    @cached_property
    def sq_norms(self) -> np.ndarray:
        """``|alpha|_2^2`` per feature."""
        return np.sum(self.indices.astype(float) ** 2, axis=1)

    @cached_property
    def h1_diag(self) -> np.ndarray:
        return 1.0 + TWO_PI**2 * self.sq_norms

    @property
    def gram_H0(self) -> np.ndarray:
        return np.eye(self.m)

    @property
    def gram_H1(self) -> np.ndarray:
        return np.diag(self.h1_diag)

    @cached_property
    def _position(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(v) for v in a): j for j, a in enumerate(self.indices)}

    def position(self, alpha) -> int:
        return self._position[tuple(int(v) for v in alpha)]

    def __contains__(self, alpha) -> bool:
        return tuple(int(v) for v in alpha) in self._position

    def features(self, x: np.ndarray) -> np.ndarray:
        """Feature matrix ``(N, m)`` for states ``x`` of shape ``(N, d)``."""
        return _eval(self.freq, self.kind, np.atleast_2d(x))

    def gradients(self, x: np.ndarray) -> np.ndarray:
        """Feature gradients, shape ``(N, m, d)``."""
        x = np.atleast_2d(x)
        phase = TWO_PI * (x @ self.freq.T)
        kind = self.kind
        scal = np.where(kind == COS, -SQRT2 * np.sin(phase), SQRT2 * np.cos(phase))
        scal[:, kind == CONST] = 0.0
        return scal[:, :, None] * (TWO_PI * self.freq)[None, :, :]

    def eval_features(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(psi(x), grad psi(x))`` for a single state; shapes ``(m,)`` and ``(m, d)``."""
        x = np.asarray(x, dtype=float).reshape(1, self.d)
        return self.features(x)[0], self.gradients(x)[0]

    def coeff_vector(self, coeffs: Mapping[tuple[int, ...], float]) -> np.ndarray:
        """Coefficient map to vector; indices outside the basis are truncated."""
        theta = np.zeros(self.m)
        for a, v in coeffs.items():
            j = self._position.get(tuple(int(t) for t in a))
            if j is not None:
                theta[j] = v
        return theta

    def coeff_map(self, theta: np.ndarray) -> dict[tuple[int, ...], float]:
        return {tuple(int(v) for v in a): float(c) for a, c in zip(self.indices, theta)}

    def to_json(self) -> str:
        return json.dumps({"d": self.d, "n": self.n, "ordering": self.indices.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "FourierBasis":
        doc = json.loads(text)
        basis = build_basis(doc["d"], doc["n"])
        if basis.indices.tolist() != doc["ordering"]:
            raise ValueError("serialized ordering does not match the canonical ordering")
        return basis

    def write_coeffs_csv(self, path, theta: np.ndarray, name: str = "coeff") -> None:
        header = ",".join([f"a_{j}" for j in range(self.d)] + [name])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for a, c in zip(self.indices, theta):
                fh.write(",".join([str(int(v)) for v in a] + [format(float(c), ".17g")]) + "\n")


def build_basis(d: int, n: int, max_features: int = DEFAULT_MAX_FEATURES) -> FourierBasis:
    return FourierBasis(MultiIndexSet.build(d, n, max_features))


def generator_action(basis: FourierBasis, model, x: np.ndarray) -> np.ndarray:
    """``(A psi)(x)`` with ``A f = <b, grad f> + 1/2 Tr(Lambda Hess f)``.

    Models carrying a ``spectrum`` use ``A psi_alpha = -lambda_alpha psi_alpha``;
    otherwise the drift and diffusion matrix are evaluated at ``x``.  Returns
    ``(m,)`` for a single state and ``(N, m)`` for a batch.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = x.reshape(-1, basis.d)
    psi = basis.features(x)
    if model.spectrum is not None:
        out = -np.asarray(model.spectrum(basis.freq))[None, :] * psi
    else:
        b = np.asarray(model.drift(x))
        lam = model.diffusion_matrix(x)  # (N, d, d)
        drift_term = np.einsum("nmd,nd->nm", basis.gradients(x), b)
        # Hess psi_alpha = -(2 pi)^2 alpha alpha^T psi_alpha
        quad = np.einsum("md,nde,me->nm", basis.freq.astype(float), lam, basis.freq.astype(float))
        out = drift_term - 0.5 * TWO_PI**2 * quad * psi
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class FunctionInSpan:
    """``f(x) = <theta, psi(x)>`` with exact Sobolev quadratic forms."""

    coeffs: np.ndarray
    basis: FourierBasis

    def __post_init__(self):
        if np.shape(self.coeffs) != (self.basis.m,):
            raise ValueError("coefficient vector does not match the basis size")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.basis.features(x) @ self.coeffs

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("nmd,m->nd", self.basis.gradients(x), self.coeffs)

    def generator(self, model, x: np.ndarray) -> np.ndarray:
        return generator_action(self.basis, model, x) @ self.coeffs

    def l2_norm(self) -> float:
        return float(np.sqrt(self.coeffs @ self.coeffs))

    def h1_norm(self) -> float:
        return float(np.sqrt(self.coeffs @ (self.basis.h1_diag * self.coeffs)))

    def as_map(self) -> dict[tuple[int, ...], float]:
        return self.basis.coeff_map(self.coeffs)
