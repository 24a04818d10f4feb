"""Seeded parameter sweeps over ``(T, eta, nu, n)`` with CSV/JSON output.

A config is one JSON or TOML document, e.g.::

    {
      "model":  {"kind": "torus_brownian", "d": 1, "sigma": 1.0},
      "reward": {"coeffs": [[[1], 0.5]], "noise": 0.1},
      "beta": 1.0,
      "nu": [2], "eta": [0.05], "n": [2], "T": [64, 128, 256],
      "seeds": {"base": 0, "count": 50}
    }

``reward`` takes either explicit ``coeffs`` (pairs of multi-index and value in
the real Fourier encoding) or ``decay`` (``{"exponent", "degree",
"amplitude"}``) for cosine modes with ``|alpha|^{-exponent}`` decay, scaled so
that ``sup |r| = amplitude``.

Trajectories depend only on ``(T, eta, seed)``, so all basis sizes and orders
at a grid point are fitted on common random numbers.
"""

from __future__ import annotations

import copy
import csv
import itertools
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import diffusion
from .basis import build_basis
from .diffusion import RewardSpec, simulate_trajectory
from .discretization import make_scheme
from .lstd import IllConditionedError, SolverPolicy, TrajectoryTooShortError, fit
from .metrics import error_report, fit_rate, quadratic_norm, trace_ratio
from .population import ValueOracle, discretized_fixed_point_coeffs, monte_carlo_theta_bar

logger = logging.getLogger(__name__)

CSV_HEADER = [
    "model", "d", "sigma", "n", "m", "nu", "eta", "beta", "T", "seed",
    "l2_err", "h1_err", "h2_err", "approx_h1", "stat_h1", "cond", "flag", "wall_ms",
]  # fmt: skip

DEFAULTS: dict[str, Any] = {
    "model": {"kind": "torus_brownian", "d": 1, "sigma": 1.0},
    "reward": {"coeffs": [[[1], 0.5]], "noise": 0.1},
    "beta": 1.0,
    "nu": [2],
    "eta": [0.05],
    "n": [2],
    "T": [64.0, 128.0, 256.0],
    "seeds": {"base": 0, "count": 10},
    "substeps": 16,
    "solver": "strict",
    "timing": False,
    "stepsize_constant": 1.0,
    "reference_T": 20000.0,
    "output": {"csv": "results.csv", "summary": "summary.json"},
}

_MODEL_KEYS = {
    "torus_brownian": {"kind", "d", "sigma"},
    "torus_langevin": {"kind", "d", "sigma", "amplitude", "rho_hat", "burn_in"},
}
_REWARD_KEYS = {"coeffs", "decay", "noise"}
_GRID_KEYS = ("nu", "eta", "n", "T")


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("reward",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib

        return tomllib.loads(text)
    return json.loads(text)


def validate_model_spec(spec: dict) -> None:
    kind = spec.get("kind")
    if kind not in _MODEL_KEYS:
        raise ConfigError(f"unknown model kind {kind!r}")
    extra = set(spec) - _MODEL_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown model keys for {kind}: {sorted(extra)}")


def validate_reward_spec(spec: dict) -> None:
    extra = set(spec) - _REWARD_KEYS
    if extra:
        raise ConfigError(f"unknown reward keys: {sorted(extra)}")
    if ("coeffs" in spec) == ("decay" in spec):
        raise ConfigError("reward needs exactly one of 'coeffs' or 'decay'")


def model_from_spec(spec: dict) -> diffusion.DiffusionModel:
    validate_model_spec(spec)
    spec = dict(spec)
    kind = spec.pop("kind")
    try:
        return getattr(diffusion, kind)(**spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def reward_coeffs_from_spec(spec: dict, d: int) -> dict[tuple[int, ...], float]:
    validate_reward_spec(spec)
    if "coeffs" in spec:
        out = {}
        for alpha, value in spec["coeffs"]:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != d:
                raise ConfigError(f"multi-index {alpha} does not have dimension {d}")
            out[alpha] = float(value)
        return out
    return decay_reward_coeffs(d, **spec["decay"])


def reward_from_spec(spec: dict, d: int) -> RewardSpec:
    return RewardSpec.from_fourier(reward_coeffs_from_spec(spec, d), float(spec.get("noise", 0.1)))


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, doc: dict, defaults: dict | None = None) -> "ExperimentConfig":
        base = DEFAULTS if defaults is None else defaults
        unknown = set(doc) - set(base)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(_merge(base, doc))
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.raw[key]

    def validate(self) -> None:
        raw = self.raw
        validate_model_spec(raw["model"])
        validate_reward_spec(raw["reward"])
        for key in _GRID_KEYS:
            if not isinstance(raw[key], list) or not raw[key]:
                raise ConfigError(f"grid {key!r} must be a nonempty list")
        if raw["seeds"].get("count", 0) < 1 or set(raw["seeds"]) - {"base", "count"}:
            raise ConfigError("seeds must be {'base': int, 'count': >= 1}")
        if not raw["beta"] > 0:
            raise ConfigError("beta must be positive")
        try:
            SolverPolicy(raw["solver"])
            self.reward_spec().check_admissible()
            for nu, eta in itertools.product(raw["nu"], raw["eta"]):
                make_scheme(nu, eta, raw["beta"])
            for n in raw["n"]:
                build_basis(self.model().dimension, n)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model(self) -> diffusion.DiffusionModel:
        return model_from_spec(self.raw["model"])

    def reward_coeffs(self) -> dict[tuple[int, ...], float]:
        return reward_coeffs_from_spec(self.raw["reward"], self.raw["model"].get("d", 1))

    def reward_spec(self) -> RewardSpec:
        return RewardSpec.from_fourier(self.reward_coeffs(), float(self.raw["reward"].get("noise", 0.1)))

    def seeds(self) -> list[int]:
        s = self.raw["seeds"]
        return [int(s.get("base", 0)) + r for r in range(int(s["count"]))]

    def stepsize_warnings(self) -> list[str]:
        """Points violating ``eta <= c m^{-4/d}`` (Fourier features have
        regularity exponent ``1/d``)."""
        d = self.model().dimension
        c0 = float(self.raw["stepsize_constant"])
        out = []
        for eta, n in itertools.product(self.raw["eta"], self.raw["n"]):
            m = build_basis(d, n).m
            if eta > c0 * m ** (-4.0 / d):
                out.append(f"eta={eta} exceeds {c0} * m^(-4/d) = {c0 * m ** (-4.0 / d):.3g} at n={n} (m={m})")
        return out


def decay_reward_coeffs(d: int, exponent: float = 3.0, degree: int = 16, amplitude: float = 0.8) -> dict:
    """Cosine modes with coefficient proportional to ``|alpha|_2^{-exponent}``
    on every positive representative with ``|alpha|_1 <= degree``; scaled so
    the sup-norm bound equals ``amplitude``."""
    basis = build_basis(d, degree)
    raw = {}
    for a, kind, sq in zip(basis.indices, basis.kind, basis.sq_norms):
        if kind == 1:
            raw[tuple(int(v) for v in a)] = sq ** (-exponent / 2)
    total = math.sqrt(2) * sum(raw.values())
    return {k: amplitude * v / total for k, v in raw.items()}


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _task(raw: dict, T: float, eta: float, seed: int, references: dict) -> list[dict]:
    cfg = ExperimentConfig(raw)
    model = cfg.model()
    reward = cfg.reward_spec()
    beta = float(raw["beta"])
    oracle = ValueOracle(model, cfg.reward_coeffs(), beta) if model.spectrum is not None else None
    traj = simulate_trajectory(model, reward, T, eta, int(raw["substeps"]), seed)
    rows = []
    for nu, n in itertools.product(raw["nu"], raw["n"]):
        t0 = time.perf_counter()
        scheme = make_scheme(nu, eta, beta)
        basis = build_basis(model.dimension, n)
        row = {
            "model": model.name, "d": model.dimension, "sigma": float(model.sigma), "n": int(n),
            "m": basis.m, "nu": int(nu), "eta": float(eta), "beta": beta, "T": float(T), "seed": int(seed),
        }  # fmt: skip
        try:
            est = fit(traj, basis, scheme, raw["solver"])
        except (IllConditionedError, TrajectoryTooShortError, np.linalg.LinAlgError) as exc:
            nan = float("nan")
            cond = getattr(exc, "cond", nan)
            row.update(l2_err=nan, h1_err=nan, h2_err=nan, approx_h1=nan, stat_h1=nan, cond=float(cond))
            row["flag"] = type(exc).__name__
        else:
            if oracle is not None:
                rep = error_report(
                    est.theta_hat, oracle.theta_bar(basis, scheme), basis, oracle.true_coeffs,
                    T=T, eta=eta, nu=nu, seed=seed,
                )  # fmt: skip
                row.update(
                    l2_err=rep.l2_error, h1_err=rep.h1_error, h2_err=rep.h2_error,
                    approx_h1=rep.approx_h1, stat_h1=rep.stat_h1,
                )  # fmt: skip
            else:
                theta_ref, (H0, H1) = references[(float(eta), int(nu), int(n))]
                delta = est.theta_hat - np.asarray(theta_ref)
                stat = quadratic_norm(delta, np.asarray(H1))
                row.update(
                    l2_err=quadratic_norm(delta, np.asarray(H0)), h1_err=stat, h2_err=float("nan"),
                    approx_h1=float("nan"), stat_h1=stat,
                )  # fmt: skip
            row["cond"] = float(est.condition_estimate)
            row["flag"] = ";".join(est.flags + ([] if oracle is not None else ["mc_oracle"]))
        row["wall_ms"] = round((time.perf_counter() - t0) * 1e3, 3) if raw["timing"] else 0
        rows.append(row)
    return rows


def _canonical_key(row: dict):
    return (row["T"], row["eta"], row["nu"], row["n"], row["seed"])


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> list[dict]:
    """Simulate, fit and score every grid point and seed.

    Solver failures become rows with a nonempty ``flag``; other points are
    unaffected.  Rows come back in canonical order whatever the worker count.
    """
    raw = config.raw
    for msg in config.stepsize_warnings():
        warnings.warn(msg, stacklevel=2)
    if workers is None:
        workers = int(os.environ.get("CTPE_WORKERS", "1"))
    model = config.model()
    references = {}
    if model.spectrum is None:
        reward = config.reward_spec()
        for eta, nu, n in itertools.product(raw["eta"], raw["nu"], raw["n"]):
            scheme = make_scheme(nu, eta, raw["beta"])
            theta, grams = monte_carlo_theta_bar(
                model, reward, build_basis(model.dimension, n), scheme, float(raw["reference_T"]),
                seed=int(raw["seeds"].get("base", 0)) + 1_000_003, substeps=int(raw["substeps"]),
            )  # fmt: skip
            references[(float(eta), int(nu), int(n))] = (theta, grams)
    jobs = [(raw, float(T), float(eta), seed, references) for T in raw["T"] for eta in raw["eta"] for seed in config.seeds()]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_task, *zip(*jobs)))
    else:
        chunks = [_task(*job) for job in jobs]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=_canonical_key)
    return rows


def write_csv(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in CSV_HEADER])


def read_csv(path: str | Path) -> list[dict]:
    ints = {"d", "n", "m", "nu", "seed"}
    strs = {"model", "flag"}
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {k: (v if k in strs else int(v) if k in ints else float(v)) for k, v in rec.items()}
            )
    return rows


def aggregate_and_fit(
    rows: Iterable[dict], group_by: str, response: str, within: Sequence[str] = ()
) -> list[dict]:
    """RMS of ``response`` per value of ``group_by`` (separately for every
    combination of the ``within`` columns), then a log-log fit of RMS against
    the group key.  Flagged rows are skipped."""
    buckets: dict[tuple, dict[float, list[float]]] = {}
    for row in rows:
        if row.get("flag") and row["flag"] not in ("", "mc_oracle"):
            continue
        v = row[response]
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        outer = tuple(row[c] for c in within)
        buckets.setdefault(outer, {}).setdefault(float(row[group_by]), []).append(float(v))
    out = []
    for outer in sorted(buckets):
        groups = buckets[outer]
        if len(groups) < 3:
            raise ValueError(f"need at least 3 groups of {group_by!r} to fit a rate, got {len(groups)}")
        keys = sorted(groups)
        rms = [math.sqrt(np.mean(np.square(groups[k]))) for k in keys]
        fitres = fit_rate(keys, rms)
        entry = dict(zip(within, outer))
        entry.update(
            group_by=group_by, response=response, keys=keys, rms=rms,
            counts=[len(groups[k]) for k in keys], slope=fitres.slope,
            intercept=fitres.intercept, r2=fitres.r2,
        )  # fmt: skip
        out.append(entry)
    return out


def summarize(rows: Sequence[dict], config: ExperimentConfig) -> dict:
    raw = config.raw
    summary: dict[str, Any] = {
        "rows": len(rows),
        "flagged": sum(1 for r in rows if r["flag"] not in ("", "mc_oracle")),
        "stepsize_warnings": config.stepsize_warnings(),
        "fits": [],
    }
    if len(set(raw["T"])) >= 3:
        summary["fits"] += aggregate_and_fit(rows, "T", "stat_h1", within=("eta", "nu", "n"))
    return summary


def write_summary(summary: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def discretization_sweep(model, r_hat: dict, beta: float, nus: Sequence[int], etas: Sequence[float]) -> dict:
    """Deterministic ``|f_bar(eta) - f*|_{H1}`` table and per-``nu`` slope in
    ``eta`` for a spectrum-bearing model."""
    from .metrics import coeff_difference, sobolev_norm

    oracle = ValueOracle(model, r_hat, beta)
    rows, fits = [], []
    for nu in nus:
        errs = []
        for eta in etas:
            scheme = make_scheme(nu, eta, beta)
            c_bar = discretized_fixed_point_coeffs(scheme, oracle.spectrum, oracle.reward_coeffs, beta)
            err = sobolev_norm(coeff_difference(c_bar, oracle.true_coeffs), 1)
            errs.append(err)
            rows.append({"nu": int(nu), "eta": float(eta), "h1_err": err})
        res = fit_rate(etas, errs)
        fits.append({"nu": int(nu), "slope": res.slope, "intercept": res.intercept, "r2": res.r2})
    return {"rows": rows, "fits": fits}


def trace_growth(d: int, ns: Sequence[int]) -> list[dict]:
    out = []
    for n in ns:
        basis = build_basis(d, n)
        out.append({"d": d, "n": int(n), "m": basis.m, "trace": trace_ratio(basis)})
    return out
