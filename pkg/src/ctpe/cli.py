"""Command-line front end.

    ctpe <subcommand> [--config FILE] [--set key=value ...] [--out DIR]

Every subcommand starts from built-in defaults, applies the config file and
then the ``--set`` overrides (dotted keys reach nested tables; values are
parsed as JSON when possible).  Exit codes: 0 success, 1 flagged rows (unless
``--allow-flags``), 2 usage error, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .advantage import AdvantageEstimate, ControlAffinePolicy, advantage_grid
from .basis import FunctionInSpan, build_basis
from .covariance import estimate_sigma_mkv, martingale_variance_proxy
from .diffusion import simulate_trajectory
from .discretization import make_scheme
from .harness import ConfigError
from .lstd import IllConditionedError, TrajectoryTooShortError, fit
from .metrics import error_report, fit_rate, trace_ratio
from .population import ValueOracle, write_oracle_csv

logger = logging.getLogger("ctpe")

_MODEL = {"kind": "torus_brownian", "d": 1, "sigma": 1.0}
_REWARD = {"coeffs": [[[1], 0.5]], "noise": 0.1}

COMMAND_DEFAULTS = {
    "simulate": {
        "model": _MODEL, "reward": _REWARD, "T": 10.0, "eta": 0.1, "substeps": 16,
        "seed": 0, "keep_inner": False,
    },
    "estimate": {
        "model": _MODEL, "reward": _REWARD, "beta": 1.0, "nu": 2, "eta": 0.05, "n": 2,
        "T": 256.0, "seed": 0, "substeps": 16, "solver": "strict",
    },
    "sweep-rate": copy.deepcopy(harness.DEFAULTS),
    "sweep-discretization": {
        "model": _MODEL, "reward": {"coeffs": [[[1], 0.5]], "noise": 0.0}, "beta": 1.0,
        "nu": [2], "eta": [0.08, 0.04, 0.02, 0.01],
    },
    "trace-growth": {"d": 1, "n": [1, 2, 4, 8, 16, 32, 64]},
    "diagnose-covariance": {
        "model": _MODEL, "reward": {"coeffs": [[[1], 0.5]], "noise": 0.0}, "beta": 1.0, "nu": 2,
        "eta": 0.05, "n": 2, "T": 500.0, "substeps": 16, "seed": 0, "K_max": 5, "window": 1,
        "f": [[[1], 1.0]], "g": [[[0], 1.0]],
    },
    "advantage-demo": {
        "model": _MODEL, "reward": _REWARD, "beta": 1.0, "nu": 2, "eta": 0.05, "n": 2,
        "T": 256.0, "seed": 0, "substeps": 16, "solver": "strict",
        "action_low": -1.0, "action_high": 1.0, "grid_x": 41, "grid_a": 21,
    },
    "oracle": {
        "model": _MODEL, "reward": {"coeffs": [[[1], 0.5]], "noise": 0.0}, "beta": 1.0,
        "nu": 2, "eta": 0.05, "n": 2,
    },
}  # fmt: skip

# dict-valued keys whose contents are replaced wholesale rather than merged
_OPAQUE = {"reward"}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(doc: dict, assignment: str, defaults: dict) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    if parts[0] not in defaults:
        raise ConfigError(f"unknown config key {parts[0]!r}")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key!r} does not address a table")
    node[parts[-1]] = _parse_value(value)


def resolve_config(command: str, config_path: str | None, overrides: list[str]) -> dict:
    defaults = COMMAND_DEFAULTS[command]
    doc: dict = {}
    if config_path:
        try:
            doc = harness.load_config_file(config_path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    for a in overrides:
        apply_override(doc, a, defaults)
    unknown = set(doc) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    for k, v in doc.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in _OPAQUE:
            if k != "model":
                extra = set(v) - set(out[k])
                if extra:
                    raise ConfigError(f"unknown keys in {k!r}: {sorted(extra)}")
            out[k].update(v)
        else:
            out[k] = v
    return out


def _model_reward(cfg: dict):
    model = harness.model_from_spec(cfg["model"])
    coeffs = harness.reward_coeffs_from_spec(cfg["reward"], model.dimension)
    reward = harness.reward_from_spec(cfg["reward"], model.dimension)
    reward.check_admissible()
    return model, coeffs, reward


def _dump(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _coeff_list(items, d: int) -> dict:
    out = {}
    for alpha, v in items:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != d:
            raise ConfigError(f"multi-index {alpha} does not have dimension {d}")
        out[alpha] = float(v)
    return out


def cmd_simulate(cfg: dict, out: Path) -> int:
    model, _, reward = _model_reward(cfg)
    traj = simulate_trajectory(
        model, reward, float(cfg["T"]), float(cfg["eta"]), int(cfg["substeps"]), int(cfg["seed"]), bool(cfg["keep_inner"])
    )
    traj.to_csv(out / "trajectory.csv")
    if cfg["keep_inner"]:
        traj.inner_to_csv(out / "inner_states.csv")
    return 0


def cmd_estimate(cfg: dict, out: Path) -> int:
    model, coeffs, reward = _model_reward(cfg)
    scheme = make_scheme(int(cfg["nu"]), float(cfg["eta"]), float(cfg["beta"]))
    basis = build_basis(model.dimension, int(cfg["n"]))
    traj = simulate_trajectory(model, reward, float(cfg["T"]), scheme.eta, int(cfg["substeps"]), int(cfg["seed"]))
    try:
        est = fit(traj, basis, scheme, cfg["solver"])
    except (IllConditionedError, TrajectoryTooShortError) as exc:
        _dump(out / "estimate.json", {"error": str(exc), "flags": [type(exc).__name__]})
        return 1
    doc = json.loads(est.to_json())
    if model.spectrum is not None:
        oracle = ValueOracle(model, coeffs, scheme.beta)
        rep = error_report(
            est.theta_hat, oracle.theta_bar(basis, scheme), basis, oracle.true_coeffs,
            T=float(cfg["T"]), eta=scheme.eta, nu=scheme.order, seed=int(cfg["seed"]),
        )  # fmt: skip
        doc["error_report"] = rep.as_dict()
    _dump(out / "estimate.json", doc)
    basis.write_coeffs_csv(out / "theta_hat.csv", est.theta_hat, "theta_hat")
    return 1 if est.flags else 0


def cmd_sweep_rate(cfg: dict, out: Path) -> int:
    config = harness.ExperimentConfig.from_dict(cfg)
    rows = harness.run_experiment(config)
    harness.write_csv(rows, out / cfg["output"]["csv"])
    summary = harness.summarize(rows, config)
    harness.write_summary(summary, out / cfg["output"]["summary"])
    return 1 if summary["flagged"] else 0


def cmd_sweep_discretization(cfg: dict, out: Path) -> int:
    model, coeffs, _ = _model_reward(cfg)
    if model.spectrum is None:
        raise ConfigError("sweep-discretization needs a model with a closed-form spectrum")
    res = harness.discretization_sweep(model, coeffs, float(cfg["beta"]), cfg["nu"], cfg["eta"])
    with open(out / "discretization.csv", "w") as fh:
        fh.write("nu,eta,h1_err\n")
        for r in res["rows"]:
            fh.write(f"{r['nu']},{r['eta']!r},{r['h1_err']:.17g}\n")
    summary = {"fits": res["fits"]}
    if len(res["fits"]) == 1:
        summary["slope"] = res["fits"][0]["slope"]
    _dump(out / "summary.json", summary)
    return 0


def cmd_trace_growth(cfg: dict, out: Path) -> int:
    d = int(cfg["d"])
    ns = [int(n) for n in cfg["n"]]
    rows = harness.trace_growth(d, ns)
    with open(out / "trace_growth.csv", "w") as fh:
        fh.write("d,n,m,trace\n")
        for r in rows:
            fh.write(f"{r['d']},{r['n']},{r['m']},{r['trace']:.17g}\n")
    summary: dict = {"d": d}
    if len(rows) >= 3:
        ms = [r["m"] for r in rows]
        tr = [r["trace"] for r in rows]
        power = fit_rate(ms, tr)
        lin = np.polyfit(np.log(ms), tr, 1)
        pred = np.polyval(lin, np.log(ms))
        ss_res = float(np.sum((np.array(tr) - pred) ** 2))
        ss_tot = float(np.sum((np.array(tr) - np.mean(tr)) ** 2))
        summary.update(
            power_slope=power.slope, power_r2=power.r2, log_slope=float(lin[0]),
            log_r2=1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0, increase=tr[-1] - tr[0],
        )  # fmt: skip
    _dump(out / "summary.json", summary)
    return 0


def cmd_diagnose_covariance(cfg: dict, out: Path) -> int:
    model, coeffs, reward = _model_reward(cfg)
    scheme = make_scheme(int(cfg["nu"]), float(cfg["eta"]), float(cfg["beta"]))
    basis = build_basis(model.dimension, int(cfg["n"]))
    traj = simulate_trajectory(
        model, reward, float(cfg["T"]), scheme.eta, int(cfg["substeps"]), int(cfg["seed"]), keep_inner=True
    )
    f = FunctionInSpan(basis.coeff_vector(_coeff_list(cfg["f"], basis.d)), basis)
    if model.spectrum is not None:
        oracle = ValueOracle(model, coeffs, scheme.beta)
        theta_bar = oracle.theta_bar(basis, scheme)
    else:
        theta_bar = fit(traj, basis, scheme, "ridge").theta_hat
    if cfg["g"] == "residual":
        if model.spectrum is None:
            raise ConfigError("g='residual' needs a closed-form spectrum")
        g = FunctionInSpan(basis.coeff_vector(oracle.true_coeffs) - theta_bar, basis)
    else:
        g = FunctionInSpan(basis.coeff_vector(_coeff_list(cfg["g"], basis.d)), basis)
    diag = estimate_sigma_mkv(traj, f, g, scheme, int(cfg["K_max"]), model, int(cfg["window"]))
    proxy = martingale_variance_proxy(traj, theta_bar, basis, scheme, model)
    diag.write_csv(out / "covariance.csv")
    summary = diag.summary()
    summary.update(martingale_proxy=proxy, trace_ratio=trace_ratio(basis))
    _dump(out / "covariance_summary.json", summary)
    return 0


def cmd_advantage_demo(cfg: dict, out: Path) -> int:
    model, _, reward = _model_reward(cfg)
    if model.dimension != 1:
        raise ConfigError("advantage-demo emits a one-dimensional grid; use d = 1")
    scheme = make_scheme(int(cfg["nu"]), float(cfg["eta"]), float(cfg["beta"]))
    basis = build_basis(1, int(cfg["n"]))
    traj = simulate_trajectory(model, reward, float(cfg["T"]), scheme.eta, int(cfg["substeps"]), int(cfg["seed"]))
    try:
        est = fit(traj, basis, scheme, cfg["solver"])
    except (IllConditionedError, TrajectoryTooShortError) as exc:
        logger.error("%s", exc)
        return 1
    lo, hi = float(cfg["action_low"]), float(cfg["action_high"])
    policy = ControlAffinePolicy([lo], [hi], lambda x: np.full((np.atleast_2d(x).shape[0], 1), 0.5 * (lo + hi)))
    grid = advantage_grid(
        AdvantageEstimate(est.value(), policy),
        np.linspace(0.0, 1.0, int(cfg["grid_x"]), endpoint=False),
        np.linspace(lo, hi, int(cfg["grid_a"])),
    )
    with open(out / "advantage.csv", "w") as fh:
        fh.write("x,a,q_hat\n")
        for x, a, q in grid:
            fh.write(f"{x:.17g},{a:.17g},{q:.17g}\n")
    return 1 if est.flags else 0


def cmd_oracle(cfg: dict, out: Path) -> int:
    model, coeffs, _ = _model_reward(cfg)
    if model.spectrum is None:
        raise ConfigError("oracle needs a model with a closed-form spectrum")
    scheme = make_scheme(int(cfg["nu"]), float(cfg["eta"]), float(cfg["beta"]))
    basis = build_basis(model.dimension, int(cfg["n"]))
    oracle = ValueOracle(model, coeffs, scheme.beta)
    columns = {
        "c_star": basis.coeff_vector(oracle.true_coeffs),
        "c_bar": basis.coeff_vector(oracle.discretized_coeffs(scheme)),
        "theta_bar": oracle.theta_bar(basis, scheme),
    }
    write_oracle_csv(out / "oracle.csv", basis, columns)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "sweep-rate": cmd_sweep_rate,
    "sweep-discretization": cmd_sweep_discretization,
    "trace-growth": cmd_trace_growth,
    "diagnose-covariance": cmd_diagnose_covariance,
    "advantage-demo": cmd_advantage_demo,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctpe", description="Continuous-time LSTD policy evaluation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    helps = {
        "simulate": "simulate a stationary trajectory and write it as CSV",
        "estimate": "fit LSTD on one trajectory and report errors",
        "sweep-rate": "seeded sweep over trajectory lengths with rate fits",
        "sweep-discretization": "population fixed-point error versus stepsize",
        "trace-growth": "Tr(H1^-1 H0) versus basis size",
        "diagnose-covariance": "lag covariances, sigma_mkv and the martingale proxy",
        "advantage-demo": "plug-in advantage function on an (x, a) grid",
        "oracle": "dump the closed-form c*, c_bar and theta_bar",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
            help="override a config entry (dotted keys for nested tables; JSON values)",
        )  # fmt: skip
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--allow-flags", action="store_true", help="exit 0 even when rows carry error flags")
        p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=max(logging.WARNING - 10 * args.verbose, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        cfg = resolve_config(args.command, args.config, args.overrides)
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](cfg, out)
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"ctpe: invalid configuration: {exc}", file=sys.stderr)
        return 3
    if code == 1 and args.allow_flags:
        return 0
    return code


if __name__ == "__main__":
    sys.exit(main())
